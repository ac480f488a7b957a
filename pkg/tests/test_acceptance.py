"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line for each."""
import json
import math
import os

import numpy as np
import pytest

from axilab.cli import main
from axilab.config import load_config
from axilab.drift import build_drift, curl, divergence, make_b1_shell, make_b3_scaled, rescale_part, stream_from_spec
from axilab.gamma import GammaRunConfig, GammaState, run_gamma
from axilab.grid import Grid, ScalarField, Trajectory, VectorFieldCyl, make_grid, sample
from axilab.io import read_trajectory
from axilab.liouville import BlowupCandidate, harmonic_mean_value_check, rescale, swirl_residual
from axilab.norms import (DyadicScaleSet, bmo_seminorm, hollowed_scaled_energy, john_nirenberg_ratio,
                          sup_r_abs)
from axilab.ns import NSRunConfig, run_ns
from axilab.pipeline import grid_of, initial_gamma, initial_ns, nash_samples
from axilab.verify import nash_gap

from oracles import mms_error, r2_cylinder_mean_value_ratio

criterion = pytest.mark.criterion
GAMMA_PRESETS = ("gamma_r2_steady", "gamma_b3_drift", "gamma_bmo_drift")
NS_PRESETS = ("ns_rigid_rotation", "ns_swirl_decay")


def _suite_run(out, threads):
    old = os.environ.get("AXILAB_THREADS")
    os.environ["AXILAB_THREADS"] = str(threads)
    try:
        assert main(["run", "verify_suite_full", "--out", str(out), "--reproducible"]) == 0
        code = main(["verify", str(out)])
    finally:
        if old is None:
            del os.environ["AXILAB_THREADS"]
        else:
            os.environ["AXILAB_THREADS"] = old
    return code


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    codes = (_suite_run(root / "a", 1), _suite_run(root / "b", 3))
    return root / "a", root / "b", codes


def _steps(directory):
    lines = (directory / "steps.csv").read_text().strip().splitlines()
    return lines[0].split(","), np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])


def _diag(directory):
    return json.loads((directory / "diagnostics.json").read_text())


@criterion(1, "manufactured steadiness of Gamma = r^2")
def test_c01_r_squared_steady(suite):
    traj = read_trajectory(suite[0] / "members" / "gamma_r2_steady" / "snapshots")
    assert traj.grid.shape == (64, 64) and traj.times[-1] == pytest.approx(0.1)
    G0 = traj.snapshots[0].values
    drift = max(float(np.abs(s.values - G0).max()) for s in traj.snapshots)
    print(f"sup drift of r^2 over T=0.1: {drift:.3e}")
    assert drift <= 1e-4


@criterion(2, "discrete maximum principle across the preset suite")
def test_c02_maximum_principle(suite):
    tol = 1e-8
    for name in GAMMA_PRESETS:
        header, a = _steps(suite[0] / "members" / name)
        # bounds of the initial data on the closed domain: cells, axis (Gamma = 0) and wall data
        hi0, lo0 = a[0, header.index("closure_max")], a[0, header.index("closure_min")]
        sup, inf = a[:, header.index("sup_gamma")], a[:, header.index("inf_gamma")]
        print(f"{name}: sup excess {sup.max() - hi0:.2e}, inf excess {lo0 - inf.min():.2e} over {len(a)} steps")
        assert np.all(sup <= hi0 + tol) and np.all(inf >= lo0 - tol)
    for name in NS_PRESETS:
        d = suite[0] / "members" / name
        header, a = _steps(d)
        col = a[:, header.index("max_abs_gamma")]
        assert np.all(col <= col[0] + tol)
        traj = read_trajectory(d / "snapshots")
        r = traj.grid.r[:, None]
        G = [r * s.vtheta.values for s in traj.snapshots]
        assert min(float(g.min()) for g in G) >= min(float(G[0].min()), 0.0) - tol
        print(f"{name}: max |Gamma| excess {col.max() - col[0]:.2e} over {len(a)} steps")


@criterion(3, "NS rigid rotation preserved and swirl-free data stays swirl-free")
def test_c03_ns_steady_state(suite):
    cfg = load_config("ns_rigid_rotation")
    omega = float(cfg.initial["omega"])
    traj = read_trajectory(suite[0] / "members" / "ns_rigid_rotation" / "snapshots")
    R, _ = traj.grid.mesh()
    err = max(max(float(np.abs(s.vtheta.values - omega * R).max()), float(np.abs(s.vr.values).max()),
                  float(np.abs(s.vz.values).max())) for s in traj.snapshots)
    assert traj.times[-1] == pytest.approx(0.1)
    # pressure up to a constant against omega^2 r^2 / 2
    g = grid_of(cfg)
    _, ps = run_ns(initial_ns(g, cfg.initial), NSRunConfig(0.01, 0.005))
    w = g.cell_volumes()
    p, ex = ps[-1].values, omega ** 2 * R ** 2 / 2
    perr = float(np.abs(p - np.sum(w * p) / w.sum() - ex + np.sum(w * ex) / w.sum()).max()) / float(ex.max())
    print(f"rigid rotation velocity error {err:.2e}, relative pressure error {perr:.3f}")
    assert err <= 1e-4 and perr <= 0.05
    free, _ = run_ns(initial_ns(g, {"kind": "swirl_free", "ring": 1.0, "width": 0.25}), NSRunConfig(0.05, 0.0125))
    assert all(np.all(s.vtheta.values == 0.0) for s in free.snapshots)
    assert max(float(np.abs(s.vr.values).max()) for s in free.snapshots) > 0


@criterion(4, "MMS spatial order between 64^2 and 128^2")
def test_c04_mms_order():
    e64, e128 = mms_error(64), mms_error(128)
    order = math.log2(e64 / e128)
    print(f"MMS sup errors {e64:.3e}, {e128:.3e}; order {order:.3f}")
    assert 1.7 <= order <= 2.3


@criterion(5, "divergence of curl drifts and of projected NS states")
def test_c05_divergence_free(suite):
    g = make_grid(64, 64, 1.0, 1.0)
    for params in ({"profile": "wave", "amplitude": 0.5, "wavenumber": 1},
                   {"profile": "gauss", "amplitude": 1.0, "width": 0.25}):
        b = curl(stream_from_spec(g, params))
        assert float(np.abs(divergence(b).values).max()) <= 1e-12
    cfg = load_config("gamma_bmo_drift")
    d = build_drift(grid_of(cfg), cfg.drift_specs())
    assert float(np.abs(divergence(d.b1 + d.b2).values).max()) <= 1e-12
    worst = 0.0
    for name in NS_PRESETS:
        header, a = _steps(suite[0] / "members" / name)
        worst = max(worst, float(a[:, header.index("divergence_residual")].max()))
    print(f"max post-projection divergence {worst:.2e}")
    assert worst <= 1e-8


@criterion(6, "HSE, sup r|b3| and BMO on exact cases")
def test_c06_norm_correctness():
    g = make_grid(32, 64, 2.0, 4.0)
    one = np.ones(g.shape)
    ez = VectorFieldCyl.from_arrays(g, 0 * one, 0 * one, one)
    hse = hollowed_scaled_energy(ez, DyadicScaleSet(1.0, 3))
    exact = 4 * math.pi / 3 * (8 - 1 / 512)
    assert hse == pytest.approx(exact, rel=0.03)
    for c in (0.3, 1.0, 7.5):
        assert abs(sup_r_abs(make_b3_scaled(make_grid(64, 64, 1.0, 1.0), c)) - c) <= 1e-12
    assert bmo_seminorm(ScalarField(g, np.full(g.shape, 2.5))) == 0.0


@criterion(7, "scale invariance of the E-norm parts and of r v^theta")
def test_c07_scale_invariance():
    g = make_grid(128, 128, 1.0, 1.0)
    scales = DyadicScaleSet(0.25, 3)
    b3 = make_b3_scaled(g, 1.3)
    b1 = make_b1_shell(g, 1.0, 0.2, 0.45)
    hse = hollowed_scaled_energy(b1, scales)
    for lam in (2.0, 0.5):
        assert sup_r_abs(rescale_part(b3, lam)) == sup_r_abs(b3)
        # lam b1(lam x) is again a shell field, built afresh on a coarser grid of the shrunk domain
        gl = make_grid(96, 96, 1.0 / lam, 1.0 / lam)
        hl = hollowed_scaled_energy(make_b1_shell(gl, lam, 0.2 / lam, 0.45 / lam), scales.scaled(1.0 / lam))
        assert hl == pytest.approx(hse, rel=0.03)
    # Gamma_lam(x, t) = Gamma(lam x, lam^2 t) for a b3 drift, whose form c / r is scale invariant
    ini = {"kind": "r2_wave", "amplitude": 1.0, "epsilon": 0.5, "wavenumber": 1}
    base = make_grid(48, 48, 1.0, 1.0)
    T = 0.02

    def final(grid, A, t_end):
        G0, wall = initial_gamma(grid, dict(ini, amplitude=A))
        st = GammaState(G0, 0.0, make_b3_scaled(grid, 1.0), wall)
        return run_gamma(st, GammaRunConfig(t_end, t_end)).snapshots[-1]

    ref = final(base, 1.0, T)
    worst = 0.0
    for lam in (2.0, 0.5):
        gl = base.scaled(1.0 / lam)
        out = final(gl, lam ** 2, T / lam ** 2)
        R, Z = gl.mesh()
        worst = max(worst, float(np.abs(out.values - sample(ref, lam * R, lam * Z)).max()))
    print(f"HSE {hse:.5f}; worst mapped r v^theta difference {worst:.2e}")
    assert worst <= 1e-3


@criterion(8, "mean-value ratio for r^2 and across the admissible suite")
def test_c08_mean_value_ratio(suite):
    ratio = _diag(suite[0] / "members" / "gamma_r2_steady")["mean_value_ratio"]
    oracle = r2_cylinder_mean_value_ratio(3)
    suite_diag = _diag(suite[0])
    print(f"r^2 ratio {ratio:.5f} vs quadrature {oracle:.5f}; suite max {suite_diag['max_mean_value_ratio']}")
    assert ratio == pytest.approx(oracle, rel=0.05) and ratio == pytest.approx(0.290, rel=0.05)
    admissible = [m for m in suite_diag["members"].values() if m["admissible"]]
    assert len(admissible) == len(suite_diag["members"])
    assert math.isfinite(suite_diag["max_mean_value_ratio"]) and suite_diag["max_mean_value_ratio"] > 0


@criterion(9, "Nash inequality on 1000 random samples and constants")
def test_c09_nash(suite):
    cfg = load_config("verify_suite_full")
    rng = np.random.default_rng(cfg.seed)
    gaps = [nash_gap(f, mu, 2.0) for f, mu in nash_samples(rng, 1000, 2.0)]
    assert len(gaps) == 1000 and all(lhs <= rhs + 1e-12 for lhs, rhs in gaps)
    for c in (1e-6, 0.3, 1.0, 2.0):
        mu = np.full(5, 0.2)
        assert nash_gap(np.full(5, c), mu, 2.0) == (0.0, 0.0)
    worst = _diag(suite[0])["nash"]["max_lhs_minus_rhs"]
    print(f"max lhs - rhs over the suite samples {worst:.2e}")
    assert worst <= 1e-12


@criterion(10, "oscillation decay and Holder exponent")
def test_c10_oscillation_decay(suite):
    d = _diag(suite[0] / "members" / "gamma_r2_steady")
    radii = d["provenance"]["scales"]
    assert len(radii) == 4
    ratios = d["decay_ratios"]
    assert len(ratios) == 3
    for q in ratios:
        assert q == pytest.approx(0.25, rel=0.10)
    assert d["alpha"] == pytest.approx(2.0, abs=0.1)
    eta = _diag(suite[0])["eta"]
    print(f"r^2 decay ratios {ratios}, alpha {d['alpha']:.4f}, suite eta {eta:.4f}")
    assert eta > 0


@criterion(11, "John-Nirenberg ratios of log|x| stable under refinement")
def test_c11_john_nirenberg():
    def ratios(n):
        g = make_grid(n, n, 1.0, 1.0)
        R, Z = g.mesh()
        B = ScalarField(g, 0.5 * np.log(R ** 2 + (Z - g.z_mid) ** 2))
        bmo = bmo_seminorm(B)
        return np.array([john_nirenberg_ratio(B, p, 0.25, bmo=bmo) for p in (2, 6)])

    coarse, fine = ratios(64), ratios(128)
    print(f"JN ratios p=2,6: 64^2 {coarse}, 128^2 {fine}")
    assert np.all(np.isfinite(coarse)) and np.all(np.isfinite(fine))
    assert np.all(np.abs(fine / coarse - 1) <= 0.15)


@criterion(12, "Liouville-lab identities")
def test_c12_liouville_identities():
    g = make_grid(32, 32, 1.0, 1.0)
    src, _ = run_ns(initial_ns(g, {"kind": "swirl_decay", "amplitude": 1.0, "ring": 0.5, "width": 0.25}),
                    NSRunConfig(0.02, 0.005))
    c = BlowupCandidate(0.25, g.z_mid, 0.02, 1.0, 1.0, len(src) - 1)
    out = rescale(src, c, g, 0.0, 1).traj.snapshots[0]
    last = src.snapshots[-1]
    err = max(float(np.abs(getattr(out, k).values - getattr(last, k).values).max()) for k in ("vr", "vtheta", "vz"))
    assert err <= 1e-12
    free, _ = run_ns(initial_ns(g, {"kind": "swirl_free", "ring": 1.0, "width": 0.25}), NSRunConfig(0.02, 0.005))
    cf = BlowupCandidate(0.2, g.z_mid, 0.02, 2.0, 1.0, len(free) - 1)
    res = swirl_residual(rescale(free, cf, Grid(32, 32, 1.6, 1.0), 0.01, 5))
    assert res["measured"] == 0.0
    gz = make_grid(64, 64, 1.0, 1.0)
    hm = harmonic_mean_value_check(ScalarField(gz, gz.mesh()[1]))
    print(f"identity error {err:.1e}, swirl residual {res['measured']}, B = z defect {hm['max_defect']:.2e}")
    assert hm["harmonic"] and hm["max_defect"] <= 0.02


@criterion(13, "verify_suite_full is bit-for-bit reproducible")
def test_c13_determinism(suite):
    a, b, codes = suite
    assert codes == (0, 0)
    for name in ("diagnostics.json", "verifier.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for m in ("gamma_r2_steady", "ns_swirl_decay"):
        for name in ("diagnostics.json", "steps.csv"):
            assert (a / "members" / m / name).read_bytes() == (b / "members" / m / name).read_bytes()
