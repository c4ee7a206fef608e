"""
Measurement campaigns, training data assembly, model validation and the
with/without-augmentation tracking comparison.

At steady state the integral action drives the total z-effort to the
feedforward effort minus the static disturbance, so settled efforts recorded
on an x-y grid sample ``m g - F_dist(w)`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gp import Dataset, OptimizerConfig, fit_posterior, optimize_hyperparameters
from .kernels import INPUT_DIM, HyperParameters, KernelSpec
from .metrics import bfr, error_norms, relative_reduction, spatial_spectrum
from .motor_sim import (
    OFFSET_STD,
    ConstantEffort,
    ControllerState,
    FrameOffset,
    PlantParams,
    PlantState,
    Scenario,
    SimulationError,
    default_field,
    design_controller,
    disturbance_force,
    draw_frame_offset,
    plant_step,
    run_closed_loop,
)
from .trajectory import MotionConstraints, tracking_trajectory

__all__ = [
    "SettlingTimeout",
    "CampaignConfig",
    "MeasurementSet",
    "EvaluationReport",
    "TrackingConfig",
    "grid_axes",
    "run_grid_campaign",
    "assemble_dataset",
    "initial_hyperparameters",
    "train_model",
    "validate_model",
    "evaluate_trace",
    "run_tracking_comparison",
    "run_tracking_traces",
    "period_from_dataset",
    "spatial_spectrum",
    "bfr",
    "error_norms",
]


class SettlingTimeout(SimulationError):
    def __init__(self, run, point, xy):
        super().__init__(f"run {run}: grid point {point} at x={xy[0]:.4f}, y={xy[1]:.4f} m did not settle")
        self.run = run
        self.point = point


@dataclass(frozen=True)
class CampaignConfig:
    x_bounds: tuple = (0.01, 0.1)
    y_bounds: tuple = (0.01, 0.1)
    spacing: float = 0.002
    runs: int = 6
    settle_tol: float = 1e-3  # N, std of the effort over the window
    settle_window: float = 0.2  # s
    min_settle: float = 1.5  # s before the first settling check
    max_settle: float = 10.0  # s
    point_period: float = 1.0  # s between consecutive grid visits (drift clock)
    offset_std: tuple = tuple(OFFSET_STD)
    drift_fraction: float = 0.5
    drift_period: float = 1200.0
    seed: int = 0

    def __post_init__(self):
        if not (self.x_bounds[0] < self.x_bounds[1] and self.y_bounds[0] < self.y_bounds[1]):
            raise ValueError("grid bounds must be ordered")
        if self.spacing <= 0 or self.runs < 1:
            raise ValueError("spacing must be positive and runs >= 1")


def grid_axes(cfg: CampaignConfig):
    """Grid coordinates; the spacing is rounded so both bounds are hit."""
    out = []
    for lo, hi in (cfg.x_bounds, cfg.y_bounds):
        n = int(round((hi - lo) / cfg.spacing)) + 1
        out.append(np.linspace(lo, hi, n))
    return tuple(out)


@dataclass
class MeasurementSet:
    """Settled efforts of one run, in raster order (x outer, y inner)."""

    run: int
    inputs: np.ndarray  # (P, 8)
    efforts: np.ndarray  # (P,)
    x: np.ndarray
    y: np.ndarray
    frame_offset: FrameOffset | None = None
    settle_time: np.ndarray | None = None

    def __len__(self):
        return self.efforts.size

    def to_dataset(self) -> Dataset:
        return Dataset(self.inputs, self.efforts)

    def grid(self) -> np.ndarray:
        """Efforts as an ``(len(x), len(y))`` array."""
        return self.efforts.reshape(self.x.size, self.y.size)


def _settle(params, gains, field, q_ref, W, noise_std, rng, cfg: CampaignConfig, run):
    """Settle one closed loop per grid point in parallel; returns (mean effort, settle time)."""
    P = q_ref.shape[0]
    ctrl = ControllerState(gains, shape=(P,))
    state = PlantState(q_ref.copy(), np.zeros_like(q_ref))
    ff = np.broadcast_to(params.gravity, (P, 6))
    d = disturbance_force(field, W)
    dist = np.zeros((P, 6))
    dist[:, 2] = d
    noise_std = np.asarray(noise_std, dtype=float)
    win = max(int(round(cfg.settle_window / params.dt)), 2)
    first = max(int(round(cfg.min_settle / params.dt)), win)
    n_max = int(round(cfg.max_settle / params.dt))
    buf = np.empty((win, P))
    result = np.full(P, np.nan)
    t_settle = np.full(P, np.nan)
    pending = np.ones(P, dtype=bool)
    for k in range(n_max):
        e = q_ref - (state.q + rng.normal(0.0, 1.0, (P, 6)) * noise_std)
        u = ff + ctrl.step(e)
        buf[k % win] = u[:, 2]
        state = plant_step(state, u + dist, params)
        if k + 1 >= first and (k + 1 - first) % win == 0:
            done = pending & (buf.std(axis=0) < cfg.settle_tol)
            result[done] = buf[:, done].mean(axis=0)
            t_settle[done] = (k + 1) * params.dt
            pending &= ~done
            if not pending.any():
                return result, t_settle
    j = int(np.nonzero(pending)[0][0])
    raise SettlingTimeout(run, j, q_ref[j, :2])


def run_grid_campaign(cfg: CampaignConfig, base: Scenario | None = None) -> list[MeasurementSet]:
    """Visit every grid point in every run and record the settled total z-effort.

    Each run draws its own frame offset (constant plus slow drift); the drift
    clock advances ``point_period`` per visited point.  Points are settled as a
    batch of independent loops, which is equivalent to visiting them one after
    another since each settles from the same hover state.
    """
    base = Scenario() if base is None else base
    params = base.params
    gains = base.gains if base.gains is not None else design_controller(params)
    fld = base.field if base.field is not None else default_field(cfg.seed)
    xs, ys = grid_axes(cfg)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    xy = np.column_stack([X.ravel(), Y.ravel()])
    P = xy.shape[0]
    q_ref = np.zeros((P, 6))
    q_ref[:, :2] = xy
    t_visit = np.arange(P) * cfg.point_period

    root = np.random.SeedSequence(cfg.seed)
    out = []
    for run, child in enumerate(root.spawn(cfg.runs)):
        rng = np.random.default_rng(child)
        offset = draw_frame_offset(rng, cfg.offset_std, cfg.drift_fraction, cfg.drift_period)
        W = np.hstack([xy, offset.at(t_visit)])
        efforts, t_settle = _settle(params, gains, fld, q_ref, W, base.noise_std, rng, cfg, run)
        out.append(MeasurementSet(run, W, efforts, xs, ys, offset, t_settle))
    return out


def assemble_dataset(sets, n: int | None = None, seed: int = 0) -> Dataset:
    """Concatenate runs, shuffle with ``seed`` and optionally keep the first ``n``."""
    sets = list(sets)
    if not sets:
        raise ValueError("no measurement sets")
    for s in sets:
        if np.shape(s.inputs)[1] != INPUT_DIM:
            raise ValueError(f"run {s.run}: inputs have {np.shape(s.inputs)[1]} columns, expected {INPUT_DIM}")
    data = Dataset.concat(s.to_dataset() if isinstance(s, MeasurementSet) else s for s in sets)
    if n is not None and n > len(data):
        raise ValueError(f"requested {n} points but only {len(data)} are available")
    perm = np.random.default_rng(seed).permutation(len(data))
    if n is not None:
        perm = perm[:n]
    return data.take(perm)


# ------------------------------------------------------------------------ training


def initial_hyperparameters(data: Dataset, period_guess: float | None = None) -> HyperParameters:
    """Data-driven starting point for the likelihood optimisation.

    ``period_guess`` is normally the dominant wavelength of a campaign grid's
    spatial spectrum; without it a 3 cm period is assumed.
    """
    W, y = data.inputs, data.targets
    spread = W.std(axis=0)
    lam = np.empty(INPUT_DIM)
    lam[:2] = 0.25 * np.maximum(np.ptp(W[:, :2], axis=0), 1e-3)
    lam[2:] = 5.0 * np.where(spread[2:] > 0, spread[2:], OFFSET_STD)
    ystd = max(float(y.std()), 1e-6)
    return HyperParameters(
        sigma1=float(np.sqrt(np.mean(y**2))),
        lambda_rbf=lam,
        lambda_sin=1.0,
        p_sin=0.03 if period_guess is None or not np.isfinite(period_guess) else period_guess,
        sigma2=np.full(2, ystd / max(float(W[:, :2].std()), 1e-6)),
        c_lin=W[:, :2].mean(axis=0),
        sigma_e=0.05 * ystd,
    )


def period_from_sets(sets) -> float:
    """Mean dominant wavelength over the x and y axes of the first run's grid."""
    s = sets[0]
    _, _, wl = spatial_spectrum(s.grid(), (s.x, s.y))
    wl = [w for w in wl if np.isfinite(w)]
    return float(np.mean(wl)) if wl else float("nan")


def period_from_dataset(data: Dataset) -> float:
    """Dominant wavelength of a dataset holding one complete x-y grid, else ``nan``."""
    xs, ix = np.unique(data.inputs[:, 0], return_inverse=True)
    ys, iy = np.unique(data.inputs[:, 1], return_inverse=True)
    if xs.size < 4 or ys.size < 4 or len(data) != xs.size * ys.size:
        return float("nan")
    grid = np.full((xs.size, ys.size), np.nan)
    grid[ix, iy] = data.targets
    if np.isnan(grid).any():
        return float("nan")
    try:
        _, _, wl = spatial_spectrum(grid, (xs, ys))
    except ValueError:
        return float("nan")
    wl = [w for w in wl if np.isfinite(w)]
    return float(np.mean(wl)) if wl else float("nan")


def train_model(
    train: Dataset,
    spec,
    init: HyperParameters,
    config: OptimizerConfig | None = None,
    opt_points: int | None = 800,
    seed: int = 0,
):
    """Optimise hyperparameters on a seeded subsample, then fit the exact posterior on all of ``train``."""
    spec = KernelSpec.parse(spec)
    opt_data = train if opt_points is None or opt_points >= len(train) else train.subsample(opt_points, seed)
    hp, report = optimize_hyperparameters(opt_data, spec, init, config)
    return fit_posterior(train, spec, hp), report


def validate_model(model, data: Dataset) -> float:
    """Held-out BFR (%) of any object with ``predict``."""
    return bfr(data.targets, model.predict(data.inputs))


# ------------------------------------------------------------------------ tracking


@dataclass
class EvaluationReport:
    """z-error norms over the whole trajectory and over the constant-velocity samples.

    ``bfr`` scores the disturbance the feedforward cancels against the true
    disturbance along the trajectory.
    """

    bfr: float
    l2: float
    linf: float
    cv_l2: float
    cv_linf: float
    n: int = 0
    n_cv: int = 0

    def as_dict(self):
        return {k: getattr(self, k) for k in ("bfr", "l2", "linf", "cv_l2", "cv_linf", "n", "n_cv")}


# named sub-stream, disjoint from the per-run campaign streams
TRACKING_STREAM = 0x7472


@dataclass
class TrackingConfig:
    constraints: MotionConstraints = field(default_factory=MotionConstraints)
    plane: tuple = (0.015, 0.055)
    dwell: float = 0.5
    params: PlantParams = field(default_factory=PlantParams)
    bandwidth_hz: float = 9.5
    field: object = None
    frame_offset: FrameOffset | None = None
    noise_std: tuple = (5e-9, 5e-9, 5e-9, 5e-8, 5e-8, 5e-8)
    seed: int = 0
    #: multiplies the designed PID gains; values far from 1 destabilise the loop
    gain_scale: float = 1.0

    def gains(self):
        g = design_controller(self.params, self.bandwidth_hz)
        if self.gain_scale == 1.0:
            return g
        return replace(g, kp=g.kp * self.gain_scale, ki=g.ki * self.gain_scale, kd=g.kd * self.gain_scale)

    def scenario(self, augmentation=None) -> Scenario:
        ref = tracking_trajectory(self.plane[0], self.plane[1], self.constraints, self.params.dt, self.dwell)
        fld = self.field if self.field is not None else default_field(self.seed)
        off = self.frame_offset
        if off is None:
            off = draw_frame_offset(np.random.default_rng([self.seed, TRACKING_STREAM]))
        return Scenario(
            reference=ref,
            params=self.params,
            gains=self.gains(),
            field=fld,
            frame_offset=off,
            augmentation=augmentation,
            seed=self.seed,
            noise_std=self.noise_std,
        )


def evaluate_trace(trace, params: PlantParams) -> EvaluationReport:
    e = trace.z_error
    l2, linf = error_norms(e)
    cv = trace.constant_velocity
    cv_l2, cv_linf = error_norms(e[cv]) if cv.any() else (float("nan"), float("nan"))
    cancelled = -(trace.fz_ff - params.mass * params.g)
    try:
        score = bfr(trace.disturbance, cancelled)
    except ValueError:
        score = float("nan")
    return EvaluationReport(score, l2, linf, cv_l2, cv_linf, e.size, int(cv.sum()))


def run_tracking_comparison(cfg: TrackingConfig, model=None):
    """Run the reference trajectory without and with the learned feedforward.

    Both runs share the seed, hence the same noise realisation.  Returns
    ``(report_without, report_with)``; the second is ``None`` without a model.
    """
    off, on = run_tracking_traces(cfg, model)
    return evaluate_trace(off, cfg.params), (None if on is None else evaluate_trace(on, cfg.params))


def run_tracking_traces(cfg: TrackingConfig, model=None):
    """The raw traces behind :func:`run_tracking_comparison`."""
    off = run_closed_loop(cfg.scenario(None))
    on = None if model is None else run_closed_loop(cfg.scenario(model))
    return off, on


def reductions(before: EvaluationReport, after: EvaluationReport) -> dict:
    return {
        k: relative_reduction(getattr(before, k), getattr(after, k))
        for k in ("l2", "linf", "cv_l2", "cv_linf")
    }


def gravity_model(params: PlantParams | None = None) -> ConstantEffort:
    """A model predicting the gravity term everywhere (no-op augmentation)."""
    params = PlantParams() if params is None else params
    return ConstantEffort(params.mass * params.g)
