import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axilab.drift import build_drift, DriftSpec, make_b3_scaled
from axilab.gamma import (CFLViolation, GammaRunConfig, GammaState, SolverDiverged, StepLog, apply_operator,
                          max_stable_dt, radial_stencil, run_gamma, step_gamma, step_gamma_forced)
from axilab.grid import ODD, ScalarField, make_grid

from oracles import mms_error


def test_stencil_is_monotone():
    st_ = radial_stencil(make_grid(32, 32, 1.0, 1.0))
    assert np.all(st_.lower >= 0) and np.all(st_.upper >= 0) and np.all(st_.center < 0)


def test_r_squared_is_exactly_steady_under_the_operator():
    g = make_grid(32, 32, 1.0, 1.0)
    R, _ = g.mesh()
    out = apply_operator(g, R ** 2, np.full(g.nz, g.r_max ** 2))
    assert np.abs(out).max() < 1e-10


def test_constant_data_only_feels_the_axis():
    # G = c with wall value c: the operator vanishes away from the axis row, which sees the axis value 0
    g = make_grid(16, 16, 1.0, 1.0)
    c = 0.7
    s = step_gamma(GammaState(ScalarField(g, np.full(g.shape, c)), wall=c), 0.5 * max_stable_dt(g))
    changed = np.abs(s.gamma.values - c) > 1e-14
    assert changed[0].all()
    assert not changed[1:].any()
    assert np.all(s.gamma.values[0] < c)


def test_cfl_violation_names_the_cell():
    g = make_grid(16, 16, 1.0, 1.0)
    s = GammaState(ScalarField.zeros(g))
    with pytest.raises(CFLViolation, match=r"cell \(i=\d+, j=\d+\)"):
        step_gamma(s, 2.0 * max_stable_dt(g))
    with pytest.raises(ValueError):
        step_gamma(s, 0.0)


def test_diverged_on_nonfinite_forcing():
    g = make_grid(8, 8, 1.0, 1.0)
    with pytest.raises(SolverDiverged):
        step_gamma_forced(GammaState(ScalarField.zeros(g)), 1e-4, np.full(g.shape, np.inf))


def test_gamma_must_be_even():
    g = make_grid(8, 8, 1.0, 1.0)
    with pytest.raises(ValueError):
        GammaState(ScalarField.zeros(g, ODD))


def test_run_config_validation():
    with pytest.raises(ValueError):
        GammaRunConfig(0.1, 0.03)
    with pytest.raises(ValueError):
        GammaRunConfig(0.1, 0.01, cfl=1.5)


def test_run_gamma_cadence_and_log():
    g = make_grid(16, 16, 1.0, 1.0)
    R, _ = g.mesh()
    log = StepLog()
    traj = run_gamma(GammaState(ScalarField(g, R ** 2), wall=1.0), GammaRunConfig(0.01, 0.0025), log)
    assert np.allclose(traj.times, [0, 0.0025, 0.005, 0.0075, 0.01], atol=1e-15)
    a = log.array()
    assert a.shape[1] == 6 and a[-1, 0] == pytest.approx(0.01)
    assert np.abs(traj.snapshots[-1].values - R ** 2).max() < 1e-12


@pytest.mark.slow
def test_manufactured_solution_second_order():
    e32, e64 = mms_error(32), mms_error(64)
    assert 1.7 < math.log2(e32 / e64) < 2.3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.0, 3.0), amp=st.floats(0.0, 2.0), wall=st.floats(0.0, 2.0))
def test_maximum_principle_random_data(seed, c, amp, wall):
    g = make_grid(16, 16, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    G0 = rng.uniform(0.0, 2.0, g.shape)
    drift = build_drift(g, {"b2": DriftSpec("stream", {"profile": "wave", "amplitude": amp}),
                            "b3": DriftSpec("scaled_inverse_r", {"c": c})})
    state = GammaState(ScalarField(g, G0), 0.0, drift, wall)
    lo, hi = state.closure_bounds()
    dt = 0.9 * max_stable_dt(g, drift.total)
    for _ in range(20):
        state = step_gamma(state, dt)
        assert state.gamma.values.max() <= hi + 1e-12
        assert state.gamma.values.min() >= lo - 1e-12


def test_time_dependent_drift_and_wall():
    g = make_grid(16, 16, 1.0, 1.0)
    R, Z = g.mesh()
    drift = lambda t: build_drift(g, {"b3": DriftSpec("scaled_inverse_r", {"c": 1.0 + t})})
    state = GammaState(ScalarField(g, R ** 2), 0.0, drift, lambda z, t: 1.0 + 0 * z)
    traj = run_gamma(state, GammaRunConfig(0.005, 0.0025))
    assert len(traj) == 3
    assert traj.snapshots[-1].values.max() <= 1.0 + 1e-12
