"""
Snap-limited (fourth-order) point-to-point trajectories.

The profile is the symmetric 15-segment construction: seven segments of
piecewise-constant snap bring the velocity up to its plateau, one segment
cruises, seven mirror segments bring it back to rest.  Four phase durations
define it completely:

    ts  constant-snap pulse
    tj  constant-jerk hold
    ta  constant-acceleration hold
    tv  constant-velocity cruise

They are found greedily, each one as long as the bounds on snap, jerk,
acceleration, velocity and distance allow, which is the time-optimal
solution for this profile family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .motor_sim import ReferenceSamples

__all__ = [
    "MotionConstraints",
    "TrajectoryProfile",
    "MultiAxisProfile",
    "plan_fourth_order",
    "plan_synchronized",
    "sample_trajectory",
    "waypoint_reference",
    "tracking_trajectory",
]


@dataclass(frozen=True)
class MotionConstraints:
    vel: float = 0.1
    acc: float = 1.0
    jerk: float = 50.0
    snap: float = 2500.0

    def __post_init__(self):
        vals = (self.vel, self.acc, self.jerk, self.snap)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ValueError(f"motion constraints must be finite and positive, got {vals}")


# snap sign pattern of the 15 segments, for a positive move
_PATTERN = np.array([1, 0, -1, 0, -1, 0, 1, 0, -1, 0, 1, 0, 1, 0, -1], dtype=float)


@dataclass(frozen=True)
class TrajectoryProfile:
    p0: float
    p1: float
    durations: np.ndarray  # (15,)
    snaps: np.ndarray  # (15,)

    def __post_init__(self):
        starts = np.concatenate([[0.0], np.cumsum(self.durations)])
        # exact polynomial propagation of (pos, vel, acc, jerk) through the segments
        states = np.zeros((16, 4))
        states[0] = (self.p0, 0.0, 0.0, 0.0)
        for i, (T, s) in enumerate(zip(self.durations, self.snaps)):
            states[i + 1] = _propagate(states[i], s, T)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "states", states)

    @property
    def duration(self) -> float:
        return float(self.starts[-1])

    @property
    def peak_velocity(self) -> float:
        """Signed cruise velocity."""
        return float(self.states[7, 1])

    def sample(self, t):
        return sample_trajectory(self, t)

    def stretched(self, duration: float) -> "TrajectoryProfile":
        """Same path, slowed down uniformly to last ``duration``."""
        if self.duration == 0.0:
            return self
        k = duration / self.duration
        if k < 1.0 - 1e-12:
            raise ValueError("a profile can only be stretched, not compressed")
        return TrajectoryProfile(self.p0, self.p1, self.durations * k, self.snaps / k**4)


def _propagate(state, s, T):
    p, v, a, j = state
    return (
        p + v * T + a * T**2 / 2 + j * T**3 / 6 + s * T**4 / 24,
        v + a * T + j * T**2 / 2 + s * T**3 / 6,
        a + j * T + s * T**2 / 2,
        j + s * T,
    )


def _phase_times(d, c: MotionConstraints):
    s, J, A, V = c.snap, c.jerk, c.acc, c.vel
    ts = min((d / (8 * s)) ** 0.25, (V / (2 * s)) ** (1 / 3), (A / s) ** 0.5, J / s)

    tj_acc = A / (s * ts) - ts
    tj_vel = (-3 * ts + np.sqrt(ts**2 + 4 * V / (s * ts))) / 2

    def dist_j(tj):
        return 2 * s * ts * (ts + tj) * (2 * ts + tj) ** 2 - d

    hi = max(tj_acc, tj_vel, ts, 1e-12)
    while dist_j(hi) < 0:
        hi *= 2
    tj_dist = 0.0 if dist_j(0.0) >= 0 else brentq(dist_j, 0.0, hi, xtol=1e-15, rtol=1e-15)
    tj = max(0.0, min(tj_acc, tj_vel, tj_dist))

    a = s * ts * (ts + tj)
    u = 2 * ts + tj
    ta_vel = V / a - u
    ta_dist = (-3 * u + np.sqrt(u**2 + 4 * d / a)) / 2
    ta = max(0.0, min(ta_vel, ta_dist))

    v = a * (u + ta)
    tv = max(0.0, d / v - (4 * ts + 2 * tj + ta))
    return ts, tj, ta, tv


def plan_fourth_order(p0: float, p1: float, c: MotionConstraints) -> TrajectoryProfile:
    """Time-optimal symmetric snap-limited move from ``p0`` to ``p1`` (rest to rest)."""
    if not (np.isfinite(p0) and np.isfinite(p1)):
        raise ValueError("positions must be finite")
    d = abs(p1 - p0)
    if d == 0.0:
        return TrajectoryProfile(float(p0), float(p1), np.zeros(15), np.zeros(15))
    ts, tj, ta, tv = _phase_times(d, c)
    half = [ts, tj, ts, ta, ts, tj, ts]
    durations = np.array(half + [tv] + half)
    snaps = np.sign(p1 - p0) * c.snap * _PATTERN
    # fold the residual distance error of the closed-form phase times into the cruise
    prof = TrajectoryProfile(float(p0), float(p1), durations, snaps)
    v = prof.peak_velocity
    if v != 0.0:
        err = p1 - prof.states[-1, 0]
        durations = durations.copy()
        durations[7] = max(0.0, durations[7] + err / v)
        prof = TrajectoryProfile(float(p0), float(p1), durations, snaps)
    return prof


def sample_trajectory(profile: TrajectoryProfile, t):
    """``(pos, vel, acc, jerk, snap)`` at time(s) ``t``, clamped to ``[0, duration]``."""
    scalar = np.ndim(t) == 0
    t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, profile.duration)
    # right-continuous; side="right" also steps over zero-length segments
    idx = np.searchsorted(profile.starts[1:-1], t, side="right")
    tau = t - profile.starts[idx]
    p, v, a, j = profile.states[idx].T
    s = profile.snaps[idx]
    out = (
        p + v * tau + a * tau**2 / 2 + j * tau**3 / 6 + s * tau**4 / 24,
        v + a * tau + j * tau**2 / 2 + s * tau**3 / 6,
        a + j * tau + s * tau**2 / 2,
        j + s * tau,
        s,
    )
    return tuple(float(x[0]) for x in out) if scalar else out


@dataclass(frozen=True)
class MultiAxisProfile:
    """Synchronised 1-D profiles sharing one duration."""

    axes: tuple

    @property
    def duration(self) -> float:
        return max(p.duration for p in self.axes) if self.axes else 0.0

    def sample(self, t):
        """Stacked ``(pos, vel, acc, jerk, snap)``, each ``(len(t), n_axes)``."""
        parts = [sample_trajectory(p, t) for p in self.axes]
        return tuple(np.stack([np.atleast_1d(p[k]) for p in parts], axis=-1) for k in range(5))

    def constant_velocity(self, t, tol=1e-9):
        """Mask of samples where every moving axis sits on its velocity plateau."""
        t = np.atleast_1d(t)
        mask = np.zeros(t.shape, dtype=bool)
        moving = [p for p in self.axes if p.duration > 0 and p.peak_velocity != 0]
        if not moving:
            return mask
        mask[:] = True
        for p in moving:
            v = sample_trajectory(p, t)[1]
            mask &= np.abs(np.abs(v) - abs(p.peak_velocity)) <= tol
        return mask


def plan_synchronized(p0, p1, c: MotionConstraints) -> MultiAxisProfile:
    """Per-axis profiles stretched to the slowest axis' duration (diagonal moves)."""
    profiles = [plan_fourth_order(a, b, c) for a, b in zip(np.ravel(p0), np.ravel(p1))]
    T = max(p.duration for p in profiles)
    return MultiAxisProfile(tuple(p.stretched(T) if p.duration > 0 else p for p in profiles))


def waypoint_reference(
    waypoints,
    c: MotionConstraints,
    dt: float,
    dwell: float = 0.5,
    z: float = 0.0,
) -> ReferenceSamples:
    """Sampled 6-axis reference visiting x-y ``waypoints`` with a dwell before each move and at the end."""
    waypoints = np.asarray(waypoints, dtype=float)
    t_list, pos, vel, acc, cv = [], [], [], [], []
    t0 = 0.0

    def hold(xy, T):
        n = int(round(T / dt))
        if n == 0:
            return
        z2 = np.zeros((n, 2))
        t_list.append(t0 + np.arange(n) * dt)
        pos.append(np.tile(xy, (n, 1)))
        vel.append(z2)
        acc.append(z2)
        cv.append(np.zeros(n, dtype=bool))

    for a, b in zip(waypoints[:-1], waypoints[1:]):
        hold(a, dwell)
        t0 += int(round(dwell / dt)) * dt
        prof = plan_synchronized(a, b, c)
        n = int(np.ceil(prof.duration / dt - 1e-9))
        tt = np.arange(n) * dt
        p, v, ac, _, _ = prof.sample(tt)
        t_list.append(t0 + tt)
        pos.append(p)
        vel.append(v)
        acc.append(ac)
        cv.append(prof.constant_velocity(tt))
        t0 += n * dt
    hold(waypoints[-1], dwell)
    t0 += int(round(dwell / dt)) * dt
    t_list.append(np.array([t0]))
    pos.append(waypoints[-1][None])
    vel.append(np.zeros((1, 2)))
    acc.append(np.zeros((1, 2)))
    cv.append(np.zeros(1, dtype=bool))

    xy_p, xy_v, xy_a = (np.concatenate(x) for x in (pos, vel, acc))
    n = xy_p.shape[0]
    P = np.zeros((n, 6))
    V = np.zeros((n, 6))
    A = np.zeros((n, 6))
    P[:, :2], V[:, :2], A[:, :2] = xy_p, xy_v, xy_a
    P[:, 2] = z
    # uniform time base (avoids accumulated rounding in the concatenated stamps)
    t = np.arange(n) * dt
    return ReferenceSamples(t, P, V, A, np.concatenate(cv))


def tracking_trajectory(
    lo: float = 0.015,
    hi: float = 0.055,
    c: MotionConstraints | None = None,
    dt: float = 1e-3,
    dwell: float = 0.5,
) -> ReferenceSamples:
    """+y move, diagonal (+x, -y) move, +y move, then back to the start."""
    c = MotionConstraints() if c is None else c
    waypoints = [(lo, lo), (lo, hi), (hi, lo), (hi, hi), (lo, lo)]
    return waypoint_reference(waypoints, c, dt, dwell)
