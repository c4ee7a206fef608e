import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maglev_gp.trajectory import (
    MotionConstraints,
    plan_fourth_order,
    plan_synchronized,
    sample_trajectory,
    tracking_trajectory,
)

C = MotionConstraints()
RATE = 10_000.0


def _sweep(prof):
    t = np.linspace(0.0, prof.duration, int(np.ceil(prof.duration * RATE)) + 1)
    return t, sample_trajectory(prof, t)


def _check_bounds(prof, c, slack=1e-9):
    _, (p, v, a, j, s) = _sweep(prof)
    assert np.max(np.abs(v)) <= c.vel * (1 + slack)
    assert np.max(np.abs(a)) <= c.acc * (1 + slack)
    assert np.max(np.abs(j)) <= c.jerk * (1 + slack)
    assert np.max(np.abs(s)) <= c.snap * (1 + slack)


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def test_constraints_must_be_positive():
    with pytest.raises(ValueError):
        MotionConstraints(vel=0.0)
    with pytest.raises(ValueError):
        MotionConstraints(snap=np.inf)


def test_degenerate_move():
    prof = plan_fourth_order(0.02, 0.02, C)
    assert prof.duration == 0.0
    assert sample_trajectory(prof, 0.3) == (0.02, 0.0, 0.0, 0.0, 0.0)


def test_non_finite_positions_rejected():
    with pytest.raises(ValueError):
        plan_fourth_order(0.0, np.nan, C)


def test_stroke_of_the_tracking_plane():
    prof = plan_fourth_order(0.0, 0.04, C)
    assert abs(sample_trajectory(prof, prof.duration)[0] - 0.04) < 1e-9
    _check_bounds(prof, C)
    p, v, a, j, _ = sample_trajectory(prof, prof.duration)
    assert (v, a, j) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
    p0 = sample_trajectory(prof, 0.0)
    assert p0[:4] == (0.0, 0.0, 0.0, 0.0)
    assert p0[4] == C.snap


def test_derivative_chain_consistency():
    """Integrate snap -> jerk -> acc -> vel -> pos at 10 kHz and compare with the sampled position.

    The grid also contains the segment switching times; between two grid
    points the snap is constant, so its trapezoid uses that one-sided value.
    """
    prof = plan_fourth_order(0.015, 0.055, C)
    t = np.union1d(np.linspace(0.0, prof.duration, int(np.ceil(prof.duration * RATE)) + 1), prof.starts)
    p, v, a, j, _ = sample_trajectory(prof, t)
    s_int = sample_trajectory(prof, 0.5 * (t[1:] + t[:-1]))[4]
    jj = j[0] + np.concatenate([[0.0], np.cumsum(s_int * np.diff(t))])
    aa = a[0] + _cumtrapz(jj, t)
    vv = v[0] + _cumtrapz(aa, t)
    pp = p[0] + _cumtrapz(vv, t)
    assert np.max(np.abs(jj - j)) < 1e-9
    assert np.max(np.abs(pp - p)) < 1e-6


def test_jerk_chain_on_plain_grid():
    prof = plan_fourth_order(0.0, -0.04, C)
    t, (p, v, a, j, _) = _sweep(prof)
    pp = p[0] + _cumtrapz(v[0] + _cumtrapz(a[0] + _cumtrapz(j, t), t), t)
    assert np.max(np.abs(pp - p)) < 1e-6


def test_reverse_move_is_time_mirror():
    fwd = plan_fourth_order(0.01, 0.05, C)
    rev = plan_fourth_order(0.05, 0.01, C)
    assert rev.duration == pytest.approx(fwd.duration, rel=1e-12)
    t = np.linspace(0, fwd.duration, 2001)
    pf = sample_trajectory(fwd, t)[0]
    pr = sample_trajectory(rev, t)[0]
    np.testing.assert_allclose(pr, pf[::-1], atol=1e-12)


def test_midpoint_peak_velocity():
    prof = plan_fourth_order(0.0, 0.04, C)
    t, (_, v, a, _, _) = _sweep(prof)
    mid = sample_trajectory(prof, prof.duration / 2)
    assert mid[1] == pytest.approx(np.max(v), rel=1e-9)
    assert mid[2] == pytest.approx(0.0, abs=1e-9)


@given(
    d=st.floats(1e-6, 0.3),
    vel=st.floats(0.01, 1.0),
    acc=st.floats(0.1, 10.0),
    jerk=st.floats(1.0, 500.0),
    snap=st.floats(10.0, 1e5),
    sign=st.sampled_from([-1.0, 1.0]),
)
def test_random_moves_respect_bounds_and_arrive(d, vel, acc, jerk, snap, sign):
    c = MotionConstraints(vel, acc, jerk, snap)
    prof = plan_fourth_order(0.01, 0.01 + sign * d, c)
    _check_bounds(prof, c, slack=1e-7)
    end = sample_trajectory(prof, prof.duration)
    assert end[0] == pytest.approx(0.01 + sign * d, abs=1e-9 + 1e-9 * d)
    # monotone position, no overshoot
    _, (p, *_) = _sweep(prof)
    assert np.all(sign * np.diff(p) >= -1e-12)


def test_samples_clamped_outside_range():
    prof = plan_fourth_order(0.0, 0.01, C)
    assert sample_trajectory(prof, -1.0)[0] == 0.0
    assert sample_trajectory(prof, prof.duration + 5)[0] == pytest.approx(0.01)


def test_synchronized_diagonal_move():
    multi = plan_synchronized([0.015, 0.055], [0.055, 0.035], C)
    T = multi.duration
    assert all(p.duration == pytest.approx(T) for p in multi.axes)
    pos = multi.sample(np.array([T]))[0][0]
    np.testing.assert_allclose(pos, [0.055, 0.035], atol=1e-9)
    for p in multi.axes:
        _check_bounds(p, C)


def test_tracking_reference_layout():
    ref = tracking_trajectory(0.015, 0.055, C, 1e-3, dwell=0.5)
    np.testing.assert_allclose(np.diff(ref.t), 1e-3)
    np.testing.assert_allclose(ref.pos[0, :2], [0.015, 0.015])
    np.testing.assert_allclose(ref.pos[-1, :2], [0.015, 0.015], atol=1e-9)
    assert ref.pos[:, :2].min() >= 0.015 - 1e-9 and ref.pos[:, :2].max() <= 0.055 + 1e-9
    assert np.all(ref.pos[:, 2:] == 0.0)
    cv = ref.constant_velocity
    assert cv.any()
    speed = np.abs(ref.vel[cv, :2]).max(axis=1)
    assert np.all(speed > 0)
    # plateau flags come from the reference itself: acceleration is zero there
    assert np.abs(ref.acc[cv]).max() < 1e-9
