"""Run, diagnose and verify scenarios described by a :class:`RunConfig`.

Everything here is deterministic: the only randomness (suite Nash samples)
comes from a generator seeded by the configuration.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, load_config
from .drift import DriftDecomposition, build_drift, curl, stream_from_spec
from .gamma import GammaRunConfig, GammaState, StepLog, run_gamma
from .grid import EVEN, Grid, ScalarField, Trajectory, make_grid, _periodic_dz
from .liouville import harmonic_mean_value_check, liouville_section
from .norms import (DyadicScaleSet, ENormReport, bmo_seminorm, e_norm, holder_fit, oscillation_profile)
from .ns import NSRunConfig, NSState, compute_b, compute_stream, project, run_ns
from .verify import (BlowdownConstants, VerifierReport, cylinder_extrema, decay_margin, lower_bound_check,
                     lp_lower_bound_check, make_entry, mean_value_ratio, moser_iterate, nash_gap,
                     normalize_phi, normalized_cutoff, oscillation_decay_check, weighted_poincare_ratio)

log = logging.getLogger(__name__)

#: suite members must have E-norm at most this to count as admissible
ADMISSIBLE_E_NORM = 10.0
#: tolerance of the per-step maximum principle check
MAX_PRINCIPLE_TOL = 1e-8


def thread_count() -> int:
    """Worker cap from ``AXILAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("AXILAB_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(func, items) -> list:
    """``list(map(func, items))`` over a thread pool; results keep the input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


# ------------------------------------------------------------ initial data


def grid_of(cfg: RunConfig) -> Grid:
    g = cfg.grid
    return make_grid(int(g["nr"]), int(g["nz"]), float(g["r_max"]), float(g["z_len"]))


def _bump(grid: Grid, r, z, width: float, z0: float):
    dz = _periodic_dz(grid, z, z0)
    return np.exp(-(r ** 2 + dz ** 2) / width ** 2)


def initial_gamma(grid: Grid, ini: dict):
    """Initial ``Gamma`` and the matching wall data (number or ``f(z, t)``)."""
    kind = ini.get("kind", "zero")
    A = float(ini.get("amplitude", 1.0))
    R, Z = grid.mesh()
    rm = grid.r_max
    if kind == "zero":
        return ScalarField.zeros(grid), 0.0
    if kind == "r2":
        return ScalarField(grid, A * R ** 2), A * rm ** 2
    if kind == "r2_wave":
        eps = float(ini.get("epsilon", 0.5))
        k = float(ini.get("wavenumber", 1))

        def shape(z):
            return 1.0 + eps * np.cos(2 * math.pi * k * np.asarray(z) / grid.z_len)

        return ScalarField(grid, A * R ** 2 * shape(Z)), lambda z, t: A * rm ** 2 * shape(z)
    if kind == "gauss":
        s = float(ini.get("width", 0.25))
        z0 = float(ini.get("z0", grid.z_mid))
        return (ScalarField(grid, A * R ** 2 * _bump(grid, R, Z, s, z0)),
                lambda z, t: A * rm ** 2 * _bump(grid, rm, np.asarray(z), s, z0))
    raise ValueError(f"unknown initial kind {kind!r}")


def initial_ns(grid: Grid, ini: dict) -> NSState:
    kind = ini.get("kind", "zero")
    R, Z = grid.mesh()
    zeros = np.zeros(grid.shape)
    if kind == "zero":
        return NSState.from_arrays(grid, zeros, zeros, zeros)
    if kind == "rigid_rotation":
        om = float(ini.get("omega", 1.0))
        return NSState.from_arrays(grid, zeros, om * R, zeros, wall_omega=om)
    if kind in ("swirl_decay", "swirl_free"):
        s = float(ini.get("width", 0.25))
        z0 = float(ini.get("z0", grid.z_mid))
        ring = curl(stream_from_spec(grid, {"profile": "gauss", "amplitude": float(ini.get("ring", 0.5)),
                                            "width": s, "z0": z0}))
        vr, vz, _ = project(grid, ring.vr.values, ring.vz.values)
        A = float(ini.get("amplitude", 1.0)) if kind == "swirl_decay" else 0.0
        return NSState.from_arrays(grid, vr, A * R * _bump(grid, R, Z, s, z0), vz)
    raise ValueError(f"unknown initial kind {kind!r}")


def gamma_of(traj: Trajectory) -> Trajectory:
    """``Gamma = r v^theta`` along a velocity trajectory (identity on scalar trajectories)."""
    if not traj.is_vector:
        return traj
    r = traj.grid.r[:, None]
    return traj.map(lambda v: ScalarField(v.grid, r * v.vtheta.values, EVEN))


# --------------------------------------------------------------- runs


@dataclass
class RunResult:
    """What a run produces before anything is written to disk."""

    config: RunConfig
    trajectory: Trajectory
    steps_header: list
    steps: list
    diagnostics: dict
    drift: DriftDecomposition | None = None
    members: list = field(default_factory=list)


GAMMA_STEP_HEADER = ["t", "sup_gamma", "inf_gamma", "l2_gamma", "closure_max", "closure_min"]
NS_STEP_HEADER = ["t", "kinetic_energy", "max_abs_v", "max_abs_gamma", "divergence_residual",
                  "poisson_iterations"]


def run_config(cfg: RunConfig) -> RunResult:
    """Execute the solver of ``cfg`` and compute its diagnostics."""
    if cfg.solver == "suite":
        return run_suite(cfg)
    grid = grid_of(cfg)
    if cfg.solver == "gamma":
        drift = build_drift(grid, cfg.drift_specs())
        G0, wall = initial_gamma(grid, cfg.initial)
        steps = StepLog()
        traj = run_gamma(GammaState(G0, 0.0, drift, wall), GammaRunConfig(cfg.t_end, cfg.snapshot_every,
                                                                           cfl=cfg.cfl), steps)
        diag = diagnostics(cfg, traj, drift)
        return RunResult(cfg, traj, GAMMA_STEP_HEADER, steps.rows, diag, drift)
    rows: list = []
    traj, _ = run_ns(initial_ns(grid, cfg.initial), NSRunConfig(cfg.t_end, cfg.snapshot_every, cfl=cfg.cfl), rows)
    diag = diagnostics(cfg, traj, None)
    return RunResult(cfg, traj, NS_STEP_HEADER, rows, diag)


def _e_norm_report(cfg: RunConfig, traj: Trajectory, drift: DriftDecomposition | None) -> tuple[ENormReport, list]:
    grid = traj.grid
    d = cfg.diagnostics
    hse_r0 = float(d["hse_r0"]) if d["hse_r0"] is not None else grid.r_max / 4
    rho = d["bmo_rho_max"]
    if drift is not None:
        return e_norm(drift, DyadicScaleSet(hse_r0, int(d["levels"])), rho), []
    # NS: the drift is the meridional velocity, all of it attributed to the stream part
    streams = [compute_stream(compute_b_from(v)) for v in traj.snapshots]
    bmo = bmo_seminorm(Trajectory(traj.times, tuple(streams)), rho)
    return ENormReport(0.0, bmo, 0.0), streams


def compute_b_from(v):
    return compute_b(NSState.from_arrays(v.grid, v.vr.values, v.vtheta.values, v.vz.values))


def diagnostics(cfg: RunConfig, traj: Trajectory, drift: DriftDecomposition | None) -> dict:
    """Norms, oscillation profile, Holder fit and the mean-value ratio (plus Liouville block for NS)."""
    G = gamma_of(traj)
    grid = traj.grid
    scales = DyadicScaleSet(cfg.scale_r0, int(cfg.diagnostics["levels"]))
    enorm, streams = _e_norm_report(cfg, traj, drift)
    prof = oscillation_profile(G, scales)
    fit = holder_fit(prof)
    out = enorm.as_dict()
    out.update({
        "per_scale": prof.as_rows(),
        "decay_ratios": [None if math.isnan(x) else float(x) for x in prof.ratios()],
        "alpha": fit.alpha,
        "holder_constant": fit.c,
        "fit_residual": fit.residual,
        "mean_value_ratio": mean_value_ratio(G, cfg.scale_r0, int(cfg.verifier["mean_value_p"])),
        "provenance": {"solver": cfg.solver, "name": cfg.name, "config_hash": cfg.digest(),
                       "grid": dict(cfg.grid), "t_end": cfg.t_end, "snapshots": len(traj),
                       "scales": [float(x) for x in scales.radii]},
    })
    if traj.is_vector:
        out["max_abs_swirl"] = max(float(np.abs(v.vtheta.values).max()) for v in traj.snapshots)
        lv = cfg.liouville
        out["liouville"] = liouville_section(traj, gamma_min=float(lv["gamma_min"]),
                                             threshold=float(lv["threshold"]), stream=streams[-1])
    return out


# ----------------------------------------------------------- verifier


def _max_principle_entries(header: list, steps: list) -> list:
    a = np.asarray(steps, dtype=float).reshape(-1, len(header))
    if header == GAMMA_STEP_HEADER:
        hi0, lo0 = a[0, 4], a[0, 5]
        sup, inf = a[:, 1].max(), a[:, 2].min()
        return [make_entry("max_principle_sup", sup, hi0 + MAX_PRINCIPLE_TOL, scale={"steps": len(a)}),
                make_entry("max_principle_inf", -inf, -lo0 + MAX_PRINCIPLE_TOL, scale={"steps": len(a)})]
    col = header.index("max_abs_gamma")
    return [make_entry("max_principle_abs", a[:, col].max(), a[0, col] + MAX_PRINCIPLE_TOL,
                       scale={"steps": len(a)})]


def _vacuous(name: str, reason: str) -> object:
    return make_entry(name, 0.0, 0.0, scale={"reason": reason}, verdict=None)


def verify_run(cfg: RunConfig, traj: Trajectory, header: list, steps: list) -> VerifierReport:
    """Configured checks on one run.

    Thresholds come from ``[verifier]``; checks whose hypotheses fail are
    recorded with ``pass = None``.
    """
    v = cfg.verifier
    rep = VerifierReport()
    rep.add(_max_principle_entries(header, steps))
    G = gamma_of(traj)
    R = cfg.scale_r0
    scales = DyadicScaleSet(R, int(cfg.diagnostics["levels"]))
    slack = float(v["slack"])
    ratio = mean_value_ratio(G, R, int(v["mean_value_p"]))
    rep.add(make_entry("mean_value", ratio, math.inf, scale={"R": R, "p": int(v["mean_value_p"])},
                       verdict=bool(math.isfinite(ratio))))
    lad = moser_iterate(G, R, int(v["moser_J"]))
    rc = lad.running_constant
    rep.add(make_entry("moser_ladder", rc, math.inf, scale={"R": R, "top_gap": lad.top_gap,
                                                            "normalized": list(lad.normalized)},
                       verdict=bool(math.isfinite(rc))))
    decay = oscillation_decay_check(G, scales, float(v["delta"]))
    for e in decay:
        e.config["slack"] = slack
        if e.passed is not None:
            e.passed = bool(e.lhs <= e.rhs * (1 + slack))
    rep.add(decay)
    lo, hi = cylinder_extrema(G, R)
    consts = BlowdownConstants(float(v["c0"]), float(v["M0"]), float(v["delta"]))
    if hi > lo:
        phi = G.map(lambda s: s.with_values(normalize_phi(s.values, lo, hi)[0]))
        rep.add(lower_bound_check(phi, consts, R))
        try:
            rep.add(lp_lower_bound_check(phi, float(v["lp_p"]), R))
        except ValueError as exc:
            rep.add(_vacuous("lp_lower_bound", str(exc)))
    else:
        rep.add(_vacuous("lower_bound", "constant field"))
        rep.add(_vacuous("lp_lower_bound", "constant field"))
    return rep


# -------------------------------------------------------------- suite


def nash_samples(rng: np.random.Generator, count: int, M: float) -> list:
    """Random positive functions ``f <= M`` on random finite probability spaces."""
    out = []
    for _ in range(count):
        n = int(rng.integers(2, 65))
        mu = rng.dirichlet(np.ones(n))
        mode = int(rng.integers(3))
        if mode == 0:
            f = rng.uniform(0.0, M, n)
        elif mode == 1:
            f = M * np.exp(-rng.exponential(2.0, n))
        else:
            f = np.full(n, M * rng.uniform(0.05, 1.0)) * (1 + 0.01 * rng.standard_normal(n)).clip(0.5, 1.0)
        f = np.clip(f, 1e-9 * M, M)
        out.append((f, mu))
    return out


POINCARE_TESTS = {
    "sin_z": lambda R, Z, L: np.sin(2 * math.pi * Z / L),
    "r_squared": lambda R, Z, L: R ** 2,
    "gauss": lambda R, Z, L: np.exp(-(R ** 2 + (Z - L / 2) ** 2) / 0.05),
    "mixed": lambda R, Z, L: R ** 2 * np.cos(2 * math.pi * Z / L) + Z,
}


def poincare_suite(grid: Grid, R: float) -> dict:
    zeta = normalized_cutoff(grid, R)
    Rm, Zm = grid.mesh()
    return {name: weighted_poincare_ratio(ScalarField(grid, f(Rm, Zm, grid.z_len)), zeta)
            for name, f in POINCARE_TESTS.items()}


def _member(name: str) -> RunResult:
    return run_config(load_config(name))


def run_suite(cfg: RunConfig) -> RunResult:
    """Run every member preset and aggregate the suite-level measurements."""
    members = ordered_map(_member, cfg.suite["members"])
    table = {}
    for m in members:
        d = m.diagnostics
        table[m.config.name] = {"e_norm": d["e_norm"], "mean_value_ratio": d["mean_value_ratio"],
                                "max_decay_ratio": max((x for x in d["decay_ratios"] if x is not None), default=0.0),
                                "alpha": d["alpha"], "admissible": d["e_norm"] <= ADMISSIBLE_E_NORM}
    adm = [v for v in table.values() if v["admissible"]]
    max_ratio = max((v["mean_value_ratio"] for v in adm), default=0.0)
    max_decay = max((v["max_decay_ratio"] for v in adm), default=0.0)
    rng = np.random.default_rng(cfg.seed)
    M = float(cfg.suite["nash_M"])
    gaps = [nash_gap(f, mu, M) for f, mu in nash_samples(rng, int(cfg.suite["nash_samples"]), M)]
    worst = max(l - r for l, r in gaps) if gaps else 0.0
    grid = members[0].trajectory.grid if members else make_grid(64, 64, 1.0, 1.0)
    poin = poincare_suite(grid, grid.r_max / 4)
    hm = harmonic_mean_value_check(ScalarField(grid, grid.mesh()[1]))
    diag = {
        "members": table,
        "admissible_e_norm": ADMISSIBLE_E_NORM,
        "max_mean_value_ratio": max_ratio,
        "max_decay_ratio": max_decay,
        "eta": 1.0 - max_decay,
        "nash": {"samples": len(gaps), "M": M, "seed": cfg.seed, "max_lhs_minus_rhs": worst},
        "poincare": {"ratios": poin, "empirical_constant": max(poin.values())},
        "harmonic_z_defect": hm["max_defect"],
        "provenance": {"solver": "suite", "name": cfg.name, "config_hash": cfg.digest()},
    }
    return RunResult(cfg, members[0].trajectory, [], [], diag, members=members)


def verify_suite(cfg: RunConfig, member_reports: list, diag: dict) -> VerifierReport:
    rep = VerifierReport()
    for r in member_reports:
        rep.add(r)
    nash = diag["nash"]
    rep.add(make_entry("nash", nash["max_lhs_minus_rhs"], 1e-12, scale={"samples": nash["samples"]},
                       config={"M": nash["M"], "seed": nash["seed"]}))
    rep.add(make_entry("suite_mean_value", diag["max_mean_value_ratio"], math.inf,
                       verdict=bool(math.isfinite(diag["max_mean_value_ratio"]))))
    rep.add(make_entry("suite_decay_margin", 0.0, diag["eta"], scale={"max_decay_ratio": diag["max_decay_ratio"]},
                       verdict=bool(diag["eta"] > 0)))
    pc = diag["poincare"]["empirical_constant"]
    rep.add(make_entry("poincare", pc, math.inf, verdict=bool(math.isfinite(pc))))
    return rep
