"""
Closed-loop simulation of the levitated translator in wrench space.

The plant is the small-angle rigid body: six decoupled double integrators
driven by ``B (W - G)`` plus the position-dependent disturbance on z.  Each
axis has a PID with filtered derivative followed by a first-order low-pass,
discretised with the bilinear transform.  Rigid-body feedforward supplies
``mass * acceleration`` and the gravity term; an optional learned model adds
``predicted total effort - gravity`` on z.

All state arrays carry the six axes in the last dimension, so a batch of
independent loops (one per grid point, say) can be stepped at once.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .kernels import INPUT_DIM, as_inputs

__all__ = [
    "SimulationError",
    "InstabilityError",
    "SmallAngleError",
    "PlantParams",
    "PlantState",
    "DisturbanceField",
    "FrameOffset",
    "AxisGains",
    "ControllerState",
    "GroundTruthEffort",
    "ConstantEffort",
    "ReferenceSamples",
    "TrackingTrace",
    "Scenario",
    "calibrated_sensitivity",
    "default_field",
    "draw_frame_offset",
    "disturbance_force",
    "plant_step",
    "design_controller",
    "loop_frequency_response",
    "closed_loop_bandwidth",
    "feedback_step",
    "feedforward_command",
    "run_closed_loop",
]

SMALL_ANGLE_LIMIT = 0.05  # rad


class SimulationError(RuntimeError):
    pass


class InstabilityError(SimulationError):
    pass


class SmallAngleError(SimulationError):
    pass


@dataclass(frozen=True)
class PlantParams:
    mass: float = 9.4
    inertia: tuple = (0.1, 0.1, 0.15)
    g: float = 9.81
    dt: float = 1e-3

    def __post_init__(self):
        if self.mass <= 0 or self.dt <= 0 or min(self.inertia) <= 0:
            raise ValueError("mass, inertias and dt must be positive")

    @property
    def axis_inertia(self) -> np.ndarray:
        """Mass for the three translations, inertia for the three rotations."""
        return np.array([self.mass] * 3 + list(self.inertia), dtype=float)

    @property
    def gravity(self) -> np.ndarray:
        """Gravity compensation wrench."""
        return np.array([0.0, 0.0, self.mass * self.g, 0.0, 0.0, 0.0])


@dataclass
class PlantState:
    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    @classmethod
    def at_rest(cls, q, shape=()):
        q = np.broadcast_to(np.asarray(q, dtype=float), shape + (6,)).copy()
        return cls(q, np.zeros_like(q), 0.0)


@dataclass(frozen=True)
class DisturbanceField:
    """Ground-truth static z-disturbance.

    ``A sin(2 pi x / p + phi_x) sin(2 pi y / p + phi_y) + slopes . (x, y)
    + sensitivity . q_MC``
    """

    amplitude: float = 2.0
    period: float = 0.028
    phases: tuple = (0.0, 0.0)
    slopes: tuple = (5.0, 5.0)
    sensitivity: tuple = (0.0,) * 6
    seed: int | None = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")

    def __call__(self, W):
        return disturbance_force(self, W)


def disturbance_force(field: DisturbanceField, w):
    """Disturbance on z (N) at input vector(s) ``w``; scalar for a single 8-vector."""
    single = np.ndim(w) == 1
    W = as_inputs(w)
    x, y = W[:, 0], W[:, 1]
    k = 2.0 * np.pi / field.period
    f = field.amplitude * np.sin(k * x + field.phases[0]) * np.sin(k * y + field.phases[1])
    f = f + field.slopes[0] * x + field.slopes[1] * y
    f = f + W[:, 2:] @ np.asarray(field.sensitivity, dtype=float)
    return float(f[0]) if single else f


@dataclass(frozen=True)
class FrameOffset:
    """Coil-to-metrology displacement: a per-run constant plus a slow sinusoidal drift."""

    base: tuple = (0.0,) * 6
    drift_amplitude: tuple = (0.0,) * 6
    drift_phase: tuple = (0.0,) * 6
    drift_period: float = 1200.0

    def at(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        drift = np.asarray(self.drift_amplitude) * np.sin(
            2.0 * np.pi * t / self.drift_period + np.asarray(self.drift_phase)
        )
        return np.asarray(self.base) + drift


OFFSET_STD = np.array([50e-6, 50e-6, 50e-6, 100e-6, 100e-6, 100e-6])
DRIFT_FRACTION = 0.5
DRIFT_PERIOD = 1200.0  # s


def draw_frame_offset(rng, std=OFFSET_STD, drift_fraction=DRIFT_FRACTION, drift_period=DRIFT_PERIOD):
    std = np.asarray(std, dtype=float)
    return FrameOffset(
        base=tuple(rng.normal(0.0, std)),
        drift_amplitude=tuple(rng.normal(0.0, drift_fraction * std)),
        drift_phase=tuple(rng.uniform(0.0, 2.0 * np.pi, 6)),
        drift_period=drift_period,
    )


def calibrated_sensitivity(target=0.46, std=OFFSET_STD, drift_fraction=DRIFT_FRACTION):
    """Per-coordinate sensitivity magnitudes giving ``target`` mean inter-run |dF|.

    Each coordinate contributes equally; the difference between two runs is
    treated as Gaussian with variance ``sum_k s_k^2 std_k^2 (2 + drift_fraction^2)``,
    whose mean absolute value is ``sqrt(2 / pi)`` times its standard deviation.
    """
    std = np.asarray(std, dtype=float)
    per_coord = target / (np.sqrt(2.0 / np.pi) * np.sqrt(std.size * (2.0 + drift_fraction**2)))
    return per_coord / std


def default_field(seed: int = 0, amplitude=2.0, period=0.028, slopes=(5.0, 5.0), inter_run_dev=0.46):
    """Synthetic field with random phases and calibrated, randomly signed sensitivities."""
    rng = np.random.default_rng(seed)
    phases = tuple(rng.uniform(0.0, 2.0 * np.pi, 2))
    signs = rng.choice([-1.0, 1.0], size=6)
    sens = tuple(signs * calibrated_sensitivity(inter_run_dev))
    return DisturbanceField(amplitude, period, phases, tuple(slopes), sens, seed)


# --------------------------------------------------------------------------- plant


def plant_step(state: PlantState, wrench, params: PlantParams, field=None, offset=None) -> PlantState:
    """Advance one sample under a zero-order-held wrench (exact for the double integrator).

    ``offset`` is the current frame offset (6-vector or batch); it only matters
    for the disturbance evaluation.
    """
    wrench = np.asarray(wrench, dtype=float)
    if not np.all(np.isfinite(wrench)):
        raise ValueError("non-finite wrench")
    net = np.array(np.broadcast_to(wrench - params.gravity, np.shape(state.q)), dtype=float)
    if field is not None:
        q = state.q.reshape(-1, 6)
        off = np.zeros((q.shape[0], 6)) if offset is None else np.broadcast_to(offset, (q.shape[0], 6))
        d = disturbance_force(field, np.hstack([q[:, :2], off]))
        net[..., 2] += d.reshape(net.shape[:-1])
    acc = net / params.axis_inertia
    dt = params.dt
    q = state.q + state.qdot * dt + 0.5 * acc * dt * dt
    qdot = state.qdot + acc * dt
    if np.any(np.abs(q[..., 3:]) > SMALL_ANGLE_LIMIT):
        raise SmallAngleError(
            f"rotation {np.max(np.abs(q[..., 3:])):.3g} rad exceeds the small-angle limit at t={state.t + dt:.4f} s"
        )
    return PlantState(q, qdot, state.t + dt)


# ---------------------------------------------------------------------- controller


@dataclass(frozen=True)
class AxisGains:
    """Parallel PID with derivative filter ``kd s / (tau_d s + 1)`` and output low-pass ``1 / (tau_lp s + 1)``.

    All fields are 6-vectors (one entry per axis).
    """

    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    tau_d: np.ndarray
    tau_lp: np.ndarray
    dt: float
    bandwidth_hz: float = float("nan")


def _lead_lag(K, wc, beta, ilow, lpr):
    wi, wd, wt, wlp = wc / ilow, wc / beta, wc * beta, wc * lpr

    def C(s):
        return K * (1 + wi / s) * (1 + s / wd) / (1 + s / wt) / (1 + s / wlp)

    return C, (wi, wd, wt, wlp)


def _zoh_plant(w, inertia, dt):
    z = np.exp(1j * w * dt)
    return dt * dt * (z + 1) / (2.0 * inertia * (z - 1) ** 2)


def _tustin(C, w, dt):
    z = np.exp(1j * w * dt)
    return C(2.0 / dt * (z - 1) / (z + 1))


def _t_bandwidth(L, f):
    T = np.abs(L / (1 + L))
    below = np.nonzero(T < 1 / np.sqrt(2))[0]
    peak = np.argmax(T)
    below = below[below > peak]
    if below.size == 0:
        return np.inf
    i = below[0]
    # log-linear interpolation between the bracketing samples
    t0, t1 = T[i - 1], T[i]
    frac = (t0 - 1 / np.sqrt(2)) / (t0 - t1)
    return float(np.exp(np.log(f[i - 1]) + frac * (np.log(f[i]) - np.log(f[i - 1]))))


def _design_axis(inertia, bandwidth_hz, dt, phase_margin_deg, ilow, lpr):
    """Loop-shaping design for ``1 / (inertia s^2)``: returns (K, wc, beta)."""
    f = np.logspace(np.log10(bandwidth_hz) - 2, np.log10(min(bandwidth_hz * 30, 0.45 / dt)), 4000)

    def at_crossover(fc):
        wc = 2 * np.pi * fc
        lo, hi = 1.01, 200.0
        for _ in range(60):
            beta = np.sqrt(lo * hi)
            C, _ = _lead_lag(1.0, wc, beta, ilow, lpr)
            L0 = _tustin(C, wc, dt) * _zoh_plant(wc, inertia, dt)
            pm = 180.0 + np.degrees(np.angle(L0 / abs(L0)))
            lo, hi = (beta, hi) if pm < phase_margin_deg else (lo, beta)
        beta = np.sqrt(lo * hi)
        C, _ = _lead_lag(1.0, wc, beta, ilow, lpr)
        K = 1.0 / abs(_tustin(C, wc, dt) * _zoh_plant(wc, inertia, dt))
        return K, wc, beta

    def bw(fc):
        K, wc, beta = at_crossover(fc)
        C, _ = _lead_lag(K, wc, beta, ilow, lpr)
        w = 2 * np.pi * f
        return _t_bandwidth(_tustin(C, w, dt) * _zoh_plant(w, inertia, dt), f)

    lo, hi = bandwidth_hz / 4.0, bandwidth_hz
    for _ in range(50):
        mid = np.sqrt(lo * hi)
        lo, hi = (mid, hi) if bw(mid) < bandwidth_hz else (lo, mid)
    return at_crossover(np.sqrt(lo * hi))


def design_controller(
    params: PlantParams,
    bandwidth_hz: float = 9.5,
    phase_margin_deg: float = 60.0,
    integrator_ratio: float = 10.0,
    lowpass_ratio: float = 10.0,
) -> AxisGains:
    """Per-axis PID + low-pass whose closed-loop -3 dB point sits at ``bandwidth_hz``.

    The crossover frequency is searched so that the complementary sensitivity
    drops by 3 dB at the requested bandwidth; at that crossover a lead-lag of
    ratio ``beta`` gives the requested phase margin, the integrator corner is
    ``crossover / integrator_ratio`` and the low-pass corner
    ``crossover * lowpass_ratio``.
    """
    kp, ki, kd, tau_d, tau_lp = (np.zeros(6) for _ in range(5))
    for ax, inertia in enumerate(params.axis_inertia):
        K, wc, beta = _design_axis(
            inertia, bandwidth_hz, params.dt, phase_margin_deg, integrator_ratio, lowpass_ratio
        )
        _, (wi, wd, wt, wlp) = _lead_lag(K, wc, beta, integrator_ratio, lowpass_ratio)
        # K (1 + wi/s)(1 + s/wd)/(1 + s/wt) == ki/s + kp + kd s/(s/wt + 1)
        tau = 1.0 / wt
        ki[ax] = K * wi
        kp[ax] = K * (1 + wi / wd) - ki[ax] * tau
        kd[ax] = K / wd - kp[ax] * tau
        tau_d[ax] = tau
        tau_lp[ax] = 1.0 / wlp
    return AxisGains(kp, ki, kd, tau_d, tau_lp, params.dt, bandwidth_hz)


def loop_frequency_response(gains: AxisGains, params: PlantParams, freqs_hz, axis: int = 2):
    """Open-loop ``C(z) P(z)`` of one axis, built from the discrete difference equations."""
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=float)
    dt = gains.dt
    z = np.exp(1j * w * dt)
    zi = 1.0 / z
    a = (2 * gains.tau_d[axis] - dt) / (2 * gains.tau_d[axis] + dt)
    b = 2 * gains.kd[axis] / (2 * gains.tau_d[axis] + dt)
    c = (2 * gains.tau_lp[axis] - dt) / (2 * gains.tau_lp[axis] + dt)
    pid = gains.kp[axis] + gains.ki[axis] * dt / 2 * (1 + zi) / (1 - zi) + b * (1 - zi) / (1 - a * zi)
    lp = (1 - c) / 2 * (1 + zi) / (1 - c * zi)
    return pid * lp * _zoh_plant(w, params.axis_inertia[axis], dt)


def closed_loop_bandwidth(gains: AxisGains, params: PlantParams, axis: int = 2) -> float:
    """-3 dB frequency (Hz) of the complementary sensitivity of one axis."""
    f = np.logspace(-2, np.log10(0.45 / gains.dt), 20000)
    return _t_bandwidth(loop_frequency_response(gains, params, f, axis), f)


class ControllerState:
    """Per-axis PID + low-pass with its internal states.

    States have shape ``batch + (6,)``.
    """

    def __init__(self, gains: AxisGains, shape=()):
        self.gains = gains
        g = gains
        dt = g.dt
        self._a = (2 * g.tau_d - dt) / (2 * g.tau_d + dt)
        self._b = 2 * g.kd / (2 * g.tau_d + dt)
        self._c = (2 * g.tau_lp - dt) / (2 * g.tau_lp + dt)
        if np.any(np.abs(self._a) >= 1) or np.any(np.abs(self._c) >= 1):
            raise ValueError("controller filter pole outside the unit circle")
        self.reset(shape)

    def reset(self, shape=()):
        z = np.zeros(tuple(shape) + (6,))
        self.integrator = z.copy()
        self.deriv = z.copy()
        self.e_prev = z.copy()
        self.u_prev = z.copy()
        self.output = z.copy()

    def step(self, error) -> np.ndarray:
        g = self.gains
        e = np.asarray(error, dtype=float)
        self.integrator = self.integrator + g.ki * g.dt * 0.5 * (e + self.e_prev)
        self.deriv = self._a * self.deriv + self._b * (e - self.e_prev)
        u = g.kp * e + self.integrator + self.deriv
        self.output = self._c * self.output + 0.5 * (1 - self._c) * (u + self.u_prev)
        self.e_prev, self.u_prev = e, u
        if not np.all(np.isfinite(self.integrator)):
            raise InstabilityError("controller integrator diverged")
        return self.output.copy()


def feedback_step(ctrl: ControllerState, error) -> np.ndarray:
    return ctrl.step(error)


# --------------------------------------------------------------------- feedforward


class GroundTruthEffort:
    """Oracle predictor of the settled total z-effort, ``m g - disturbance``."""

    def __init__(self, field: DisturbanceField, params: PlantParams):
        self.field = field
        self.params = params

    def predict(self, W):
        return self.params.mass * self.params.g - disturbance_force(self.field, as_inputs(W))


class ConstantEffort:
    """Predicts a fixed total effort everywhere (gravity alone gives a no-op augmentation)."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, W):
        return np.full(as_inputs(W).shape[0], self.value)


def feedforward_command(ref_acc, params: PlantParams, augmentation=None, w=None):
    """Rigid-body feedforward wrench(es).

    ``ref_acc`` is a 6-vector or ``(K, 6)`` array of reference accelerations;
    ``w`` holds the matching input vectors (reference x, y and the frame-offset
    estimate) and is required when ``augmentation`` is given.
    """
    acc = np.asarray(ref_acc, dtype=float)
    ff = acc * params.axis_inertia + params.gravity
    if augmentation is not None:
        if w is None:
            raise ValueError("augmentation needs input vectors")
        W = np.asarray(w, dtype=float)
        if W.shape[-1] != INPUT_DIM:
            raise ValueError(f"predictor inputs must have {INPUT_DIM} entries, got {W.shape[-1]}")
        pred = np.asarray(augmentation.predict(as_inputs(W)), dtype=float)
        ff = np.array(ff, dtype=float, copy=True)
        ff[..., 2] += (pred - params.mass * params.g).reshape(ff[..., 2].shape)
    return ff


# ---------------------------------------------------------------------- closed loop


@dataclass
class ReferenceSamples:
    """Sampled 6-axis reference: ``t`` is ``(K,)``, the rest ``(K, 6)``."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    constant_velocity: np.ndarray = None

    def __post_init__(self):
        if self.constant_velocity is None:
            self.constant_velocity = np.zeros(self.t.shape[0], dtype=bool)

    @classmethod
    def hold(cls, pos, duration, dt):
        n = int(round(duration / dt)) + 1
        t = np.arange(n) * dt
        p = np.tile(np.asarray(pos, dtype=float), (n, 1))
        return cls(t, p, np.zeros_like(p), np.zeros_like(p))


@dataclass
class TrackingTrace:
    t: np.ndarray
    ref: np.ndarray
    meas: np.ndarray
    z_error: np.ndarray
    fz_total: np.ndarray
    fz_ff: np.ndarray
    constant_velocity: np.ndarray
    disturbance: np.ndarray = None

    @property
    def error(self) -> np.ndarray:
        return self.ref - self.meas


@dataclass
class Scenario:
    reference: ReferenceSamples | None = None
    params: PlantParams = dataclasses.field(default_factory=PlantParams)
    gains: AxisGains | None = None
    field: DisturbanceField | None = None
    frame_offset: FrameOffset = dataclasses.field(default_factory=FrameOffset)
    augmentation: object = None
    seed: int = 0
    noise_std: tuple = (5e-9, 5e-9, 5e-9, 5e-8, 5e-8, 5e-8)
    travel_range: float = 0.1
    #: extra disturbance added on z (N), e.g. a constant load for settling tests
    constant_disturbance: float = 0.0


def run_closed_loop(scn: Scenario) -> TrackingTrace:
    """Fixed-step loop: measure, feedback + feedforward, ZOH plant update."""
    ref = scn.reference
    params = scn.params
    gains = scn.gains if scn.gains is not None else design_controller(params)
    if abs(gains.dt - params.dt) > 1e-15 or np.any(np.abs(np.diff(ref.t) - params.dt) > 1e-9):
        raise ValueError("reference, controller and plant sample periods differ")
    n = ref.t.shape[0]
    rng = np.random.default_rng(scn.seed)
    offsets = scn.frame_offset.at(ref.t)
    W_ref = np.hstack([ref.pos[:, :2], offsets])
    ff = feedforward_command(ref.acc, params, scn.augmentation, W_ref if scn.augmentation is not None else None)
    noise = rng.normal(0.0, 1.0, (n, 6)) * np.asarray(scn.noise_std)

    ctrl = ControllerState(gains)
    state = PlantState(ref.pos[0].copy(), ref.vel[0].copy(), ref.t[0])
    # start with the integrator holding the settled effort against the initial load
    if scn.field is not None or scn.constant_disturbance:
        d0 = scn.constant_disturbance
        if scn.field is not None:
            d0 += disturbance_force(scn.field, W_ref[0])
        ctrl.integrator[2] = -d0 - (ff[0, 2] - params.mass * params.g)
        ctrl.output[2] = ctrl.u_prev[2] = ctrl.integrator[2]

    meas = np.empty((n, 6))
    fz_total = np.empty(n)
    dist = np.zeros(n)
    limit = 10.0 * scn.travel_range
    e_z = np.array([0, 0, 1.0, 0, 0, 0])
    for k in range(n):
        y = state.q + noise[k]
        meas[k] = y
        e = ref.pos[k] - y
        if np.max(np.abs(e)) > limit:
            raise InstabilityError(f"tracking error {np.max(np.abs(e)):.3g} exceeds 10x travel at t={ref.t[k]:.4f} s")
        wrench = ff[k] + ctrl.step(e)
        fz_total[k] = wrench[2]
        if scn.field is not None:
            dist[k] = disturbance_force(scn.field, np.concatenate([state.q[:2], offsets[k]]))
        dist[k] += scn.constant_disturbance
        try:
            state = plant_step(state, wrench + dist[k] * e_z, params)
        except SmallAngleError as exc:
            # the reference holds zero rotation, so leaving the linear range means divergence
            raise InstabilityError(f"loop diverged: {exc}") from exc
    return TrackingTrace(
        t=ref.t.copy(),
        ref=ref.pos.copy(),
        meas=meas,
        z_error=ref.pos[:, 2] - meas[:, 2],
        fz_total=fz_total,
        fz_ff=ff[:, 2].copy(),
        constant_velocity=ref.constant_velocity.copy(),
        disturbance=dist,
    )
