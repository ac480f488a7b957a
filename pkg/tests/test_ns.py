import math

import numpy as np
import pytest

from axilab.drift import curl, divergence, stream_from_spec
from axilab.gamma import CFLViolation
from axilab.grid import ODD, ScalarField, VectorFieldCyl, make_grid
from axilab.ns import (NSRunConfig, NSState, PoissonNotConverged, PoissonSolveConfig, compute_gamma,
                       compute_stream, divergence_residual, kinetic_energy, max_stable_dt, poisson_apply,
                       pressure_poisson, project, run_ns, step_ns)
from axilab.pipeline import initial_ns


def test_projection_removes_divergence():
    g = make_grid(24, 24, 1.0, 1.0)
    rng = np.random.default_rng(3)
    vr, vz = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    pr, pz, p = project(g, vr, vz)
    b = VectorFieldCyl.from_arrays(g, pr, np.zeros(g.shape), pz, "closed")
    assert np.abs(divergence(b).values).max() < 1e-10
    # idempotent
    pr2, pz2, _ = project(g, pr, pz)
    assert np.allclose(pr2, pr, atol=1e-11) and np.allclose(pz2, pz, atol=1e-11)
    w = g.cell_volumes()
    assert abs(np.sum(w * p)) < 1e-10


def test_projection_is_orthogonal_in_volume_norm():
    g = make_grid(16, 16, 1.0, 1.0)
    rng = np.random.default_rng(4)
    vr, vz = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    pr, pz, _ = project(g, vr, vz)
    r = g.r[:, None]
    # the removed part is orthogonal to every divergence-free field, the projected one included
    assert abs(np.sum(r * ((vr - pr) * pr + (vz - pz) * pz))) < 1e-9


def test_compute_stream_round_trip():
    g = make_grid(32, 32, 1.0, 1.0)
    B = stream_from_spec(g, {"profile": "gauss", "amplitude": 1.0, "width": 0.2})
    back = compute_stream(curl(B))
    assert np.abs(back.values - B.values).max() < 1e-12


def test_pressure_poisson_oracles():
    g = make_grid(32, 32, 1.0, 1.0)
    R, Z = g.mesh()
    # p = cos(2 pi z): Lap p = -(2 pi)^2 p exactly for the z stencil eigenvalue
    lam = -(2 - 2 * math.cos(2 * math.pi * g.dz)) / g.dz ** 2
    p_true = np.cos(2 * math.pi * Z)
    p, iters = pressure_poisson(ScalarField(g, lam * p_true), return_info=True)
    assert np.abs(p.values - p_true).max() < 1e-8 and iters > 0
    # p = r^2 with Neumann wall flux 2: Lap p = 4
    p2 = pressure_poisson(ScalarField(g, np.full(g.shape, 4.0)), wall_flux=2.0)
    target = R ** 2 - np.sum(g.cell_volumes() * R ** 2) / g.cell_volumes().sum()
    assert np.abs(p2.values - target).max() < 1e-8
    assert np.abs(poisson_apply(p2.values, g, 2.0) - 4.0).max() < 1e-6


def test_pressure_poisson_reports_non_convergence():
    g = make_grid(32, 32, 1.0, 1.0)
    R, Z = g.mesh()
    with pytest.raises(PoissonNotConverged) as err:
        pressure_poisson(ScalarField(g, np.sin(2 * math.pi * Z) * R ** 2), PoissonSolveConfig(1e-12, 2))
    assert err.value.iterations <= 2
    with pytest.raises(ValueError):
        PoissonSolveConfig(rtol=2.0)


def test_zero_state_stays_zero():
    g = make_grid(16, 16, 1.0, 1.0)
    s = initial_ns(g, {"kind": "zero"})
    s = step_ns(s, 0.5 * max_stable_dt(s))
    assert np.all(s.velocity.magnitude() == 0)


def test_rigid_rotation_short_run():
    g = make_grid(32, 32, 1.0, 1.0)
    s = initial_ns(g, {"kind": "rigid_rotation", "omega": 1.0})
    traj, _ = run_ns(s, NSRunConfig(0.01, 0.005))
    R, _ = g.mesh()
    last = traj.snapshots[-1]
    assert np.abs(last.vtheta.values - R).max() < 1e-6
    assert np.abs(last.vr.values).max() < 1e-4


def test_swirl_free_stays_swirl_free_and_energy_decays():
    g = make_grid(24, 24, 1.0, 1.0)
    s = initial_ns(g, {"kind": "swirl_free", "ring": 1.0, "width": 0.25})
    rows = []
    traj, _ = run_ns(s, NSRunConfig(0.01, 0.0025), rows)
    assert all(np.all(v.vtheta.values == 0) for v in traj.snapshots)
    E = [r[1] for r in rows]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(E, E[1:]))
    assert max(r[4] for r in rows) < 1e-10


def test_swirl_gamma_bounded_by_initial():
    g = make_grid(24, 24, 1.0, 1.0)
    s = initial_ns(g, {"kind": "swirl_decay", "amplitude": 2.0, "ring": 0.5, "width": 0.25})
    g0 = np.abs(compute_gamma(s).values).max()
    rows = []
    run_ns(s, NSRunConfig(0.01, 0.0025), rows)
    assert max(r[3] for r in rows) <= g0 + 1e-12


def test_ns_cfl_violation():
    g = make_grid(16, 16, 1.0, 1.0)
    s = initial_ns(g, {"kind": "rigid_rotation"})
    with pytest.raises(CFLViolation):
        step_ns(s, 3 * max_stable_dt(s))


def test_state_invariants():
    g = make_grid(8, 8, 1.0, 1.0)
    s = NSState.from_arrays(g, np.zeros(g.shape), np.zeros(g.shape), np.zeros(g.shape))
    assert s.velocity.wall == "closed"
    assert kinetic_energy(s) == 0 and divergence_residual(s) == 0
    with pytest.raises(ValueError):
        NSState(s.velocity, ScalarField.zeros(g, ODD))
