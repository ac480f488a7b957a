"""Numerical certificates for the local estimates satisfied by Gamma.

Every check reports a measured left side, the quantity it is compared
with, their ratio and a verdict.  Constants in the underlying inequalities
are existential, so thresholds are configuration and recorded with the
entry.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .grid import EVEN, Grid, ScalarField, Trajectory, VectorFieldCyl, _periodic_dz, ball_weights, check_ball, pad, sample
from .norms import DyadicScaleSet, _as_trajectory, _ball_points, _window, oscillation_profile

#: snapshots required inside the time window of the finest cylinder
MIN_WINDOW_SNAPSHOTS = 8


# --------------------------------------------------------------- report


@dataclass
class VerifierEntry:
    name: str
    lhs: float
    rhs: float
    ratio: float
    passed: bool | None
    scale: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def make_entry(name: str, lhs: float, rhs: float, slack: float = 0.0, scale=None, config=None,
               verdict: bool | None | str = "compare") -> VerifierEntry:
    """Entry with ``pass = lhs <= rhs (1 + slack)`` unless a verdict is forced."""
    ratio = lhs / rhs if rhs != 0 else (0.0 if lhs == 0 else math.inf)
    if verdict == "compare":
        verdict = bool(lhs <= rhs * (1 + slack))
    cfg = dict(config or {})
    cfg.setdefault("slack", slack)
    return VerifierEntry(name, float(lhs), float(rhs), float(ratio), verdict, dict(scale or {}), cfg)


@dataclass
class VerifierReport:
    entries: list = field(default_factory=list)

    def add(self, entry) -> None:
        if isinstance(entry, VerifierReport):
            self.entries.extend(entry.entries)
        elif isinstance(entry, list):
            self.entries.extend(entry)
        else:
            self.entries.append(entry)

    @property
    def all_pass(self) -> bool:
        """True iff no non-vacuous check failed (``pass = None`` does not count)."""
        return all(e.passed is not False for e in self.entries)

    def as_dict(self) -> dict:
        return {"entries": [e.as_dict() for e in self.entries], "all_pass": self.all_pass}


# -------------------------------------------------------------- cutoffs


def smooth_step(s):
    """``C^infinity`` step: 1 for ``s <= 0``, 0 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)

    def f(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = f(1.0 - s), f(s)
    return a / (a + b)


def _gradient(grid: Grid, u: np.ndarray, parity: str = EVEN) -> tuple[np.ndarray, np.ndarray]:
    """Centred ``(d_r u, d_z u)`` with parity ghosts and linear wall extrapolation."""
    P = pad(u, parity, "extrapolate")
    ur = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2 * grid.dr)
    uz = (P[1:-1, 2:] - P[1:-1, :-2]) / (2 * grid.dz)
    return ur, uz


@dataclass(frozen=True, eq=False)
class CutoffPair:
    """Space-time cutoff ``phi(x) eta(t)`` about ``(0, z0, t0)``.

    ``phi = chi^2`` with ``chi`` a smooth radial step from 1 on ``|x| <= inner``
    to 0 on ``|x| >= outer``, so ``grad(phi)/sqrt(phi) = 2 grad(chi)`` stays
    bounded.  ``eta`` rises from 0 at ``t0 - outer_t^2`` to 1 at
    ``t0 - inner_t^2``.  ``bounds`` holds grid measurements of ``sup|eta'|``,
    ``sup|grad phi / sqrt phi|`` and ``sup|grad(grad phi / sqrt phi)|``.
    ``scale`` multiplies ``phi`` (normalised weights have plateau ``scale``).
    """

    phi: ScalarField
    inner: float
    outer: float
    z0: float
    t0: float = 0.0
    inner_t: float | None = None
    outer_t: float | None = None
    scale: float = 1.0
    bounds: dict = field(default_factory=dict)

    @classmethod
    def build(cls, grid: Grid, inner: float, outer: float, z0: float | None = None, t0: float = 0.0,
              scale: float = 1.0) -> "CutoffPair":
        if not 0 <= inner < outer:
            raise ValueError("need 0 <= inner < outer")
        z0 = grid.z_mid if z0 is None else z0
        R, Z = grid.mesh()
        rho = np.hypot(R, _periodic_dz(grid, Z, z0))
        chi = smooth_step((rho - inner) / (outer - inner))
        phi = ScalarField(grid, scale * chi ** 2)
        pair = cls(phi, inner, outer, z0, t0, inner, outer, scale)
        object.__setattr__(pair, "bounds", pair._measure_bounds(chi))
        return pair

    def eta(self, t) -> np.ndarray:
        a, b = self.inner_t ** 2, self.outer_t ** 2
        return smooth_step((self.t0 - np.asarray(t, dtype=float) - a) / (b - a))

    def _measure_bounds(self, chi: np.ndarray) -> dict:
        grid = self.phi.grid
        gr, gz = _gradient(grid, chi)
        k = 2.0 * math.sqrt(self.scale)  # grad(phi)/sqrt(phi) = 2 sqrt(scale) grad(chi)
        qr, qz = k * gr, k * gz
        q = np.hypot(qr, qz)
        hr = np.hypot(*_gradient(grid, qr, "odd"))
        hz = np.hypot(*_gradient(grid, qz))
        ts = np.linspace(self.t0 - self.outer_t ** 2, self.t0 - self.inner_t ** 2, 2001)
        eta_d = np.abs(np.diff(self.eta(ts)) / np.diff(ts))
        return {"eta_prime": float(eta_d.max()), "grad_phi_over_sqrt_phi": float(q.max()),
                "grad_of_ratio": float(np.max(hr + hz))}

    def check(self) -> bool:
        v = self.phi.values
        ok = bool(v.min() >= 0 and v.max() <= self.scale * (1 + 1e-12))
        return ok and all(math.isfinite(x) for x in self.bounds.values())


def normalized_cutoff(grid: Grid, R: float = 1.0, z0: float | None = None) -> CutoffPair:
    """Weight ``zeta_R^2`` with ``zeta = 1`` on ``B(R/2)``, zero off ``B(R)``, ``int zeta_R^2 = 1``.

    ``zeta_R(x) = R^{-3/2} zeta(x / R)``; the outer radius of the transition
    layer is chosen in ``(R/2, R]`` so the normalisation holds for the
    plateau value 1 before scaling.
    """
    check_ball(grid, R, (0.0, grid.z_mid if z0 is None else z0))
    w = grid.cell_volumes()

    def mass(a):
        c = CutoffPair.build(grid, 0.5 * R, a * R, z0)
        return float(np.sum(w * c.phi.values)) / R ** 3 - 1.0

    lo, hi = 0.5 + 1e-3, 1.0
    if mass(hi) < 0:
        raise ValueError("no cutoff with unit mass fits inside B(1)")
    a = brentq(mass, lo, hi, xtol=1e-12) if mass(lo) < 0 else lo
    base = CutoffPair.build(grid, 0.5 * R, a * R, z0)
    total = float(np.sum(w * base.phi.values))
    return CutoffPair.build(grid, 0.5 * R, a * R, z0, scale=1.0 / total)


# ------------------------------------------------------- space-time sums


def _time_integral(times: np.ndarray, values: np.ndarray, t_lo: float, t_hi: float) -> float:
    """Integral over ``[t_lo, t_hi]`` of the piecewise-linear interpolant."""
    if len(times) == 1:
        return float(values[0]) * (t_hi - t_lo)
    inner = (times > t_lo) & (times < t_hi)
    ts = np.concatenate([[t_lo], times[inner], [t_hi]])
    vs = np.interp(ts, times, values)
    return float(np.trapezoid(vs, ts))


def _window_span(traj: Trajectory, t0: float, duration: float) -> np.ndarray:
    """Snapshot indices needed to integrate over ``[t0 - duration, t0]`` (including the bracketing one)."""
    if len(traj) == 1:
        return np.array([0])
    idx = _window(traj, t0, duration)
    if idx.size < MIN_WINDOW_SNAPSHOTS:
        raise ValueError(f"only {idx.size} snapshots in a window of length {duration:.3g}; "
                         f"need {MIN_WINDOW_SNAPSHOTS}")
    first = idx[0]
    if first > 0 and traj.times[first] > t0 - duration:
        idx = np.concatenate([[first - 1], idx])
    return idx


def spacetime_integral(traj, R: float, p: float, t0: float | None = None, z0: float | None = None,
                       inner: float = 0.0) -> float:
    """``int_{t0-R^2}^{t0} int_{B_R minus B_inner} |f|^p dx dt`` (trapezoid in time)."""
    traj = _as_trajectory(traj)
    grid = traj.grid
    z0 = grid.z_mid if z0 is None else z0
    t0 = float(traj.times[-1]) if t0 is None else t0
    check_ball(grid, R, (0.0, z0))
    w = ball_weights(grid, R, (0.0, z0))
    if inner > 0:
        w = w - ball_weights(grid, inner, (0.0, z0))
    idx = _window_span(traj, t0, R * R)
    vals = np.array([np.sum(w * np.abs(traj.snapshots[k].values) ** p) for k in idx])
    return _time_integral(traj.times[idx], vals, t0 - R * R, t0)


def cylinder_extrema(traj, R: float, t0: float | None = None, z0: float | None = None) -> tuple[float, float]:
    """``(inf, sup)`` over ``P(R)`` from cell values and boundary samples."""
    traj = _as_trajectory(traj)
    grid = traj.grid
    z0 = grid.z_mid if z0 is None else z0
    t0 = float(traj.times[-1]) if t0 is None else t0
    check_ball(grid, R, (0.0, z0))
    inside, rb, zb = _ball_points(grid, R, z0)
    lo, hi = math.inf, -math.inf
    for k in _window(traj, t0, R * R):
        f = traj.snapshots[k]
        v = np.concatenate([f.values[inside], sample(f, rb, zb)])
        lo, hi = min(lo, float(v.min())), max(hi, float(v.max()))
    return lo, hi


def cylinder_volume(R: float, inner: float = 0.0) -> float:
    return 4.0 * math.pi / 3.0 * (R ** 3 - inner ** 3) * R * R


# ---------------------------------------------------------- mean value


def mean_value_ratio(traj, R: float, p: float = 3, t0: float | None = None, z0: float | None = None) -> float:
    """``sup_{P(R/2)} |G| / (R^-5 int_{P(R)} |G|^p)^{1/p}``; zero for a vanishing field."""
    if p not in (2, 3):
        raise ValueError("exponent must be 2 or 3")
    den = (spacetime_integral(traj, R, p, t0, z0) / R ** 5) ** (1.0 / p)
    if den == 0:
        return 0.0
    lo, hi = cylinder_extrema(traj, R / 2, t0, z0)
    return max(abs(lo), abs(hi)) / den


def mean_value_oracle_r2(p: int = 3) -> float:
    """Continuum ratio for ``G = r^2``: ``(1/4) / (c_p)^{1/p}`` with ``int_{B_1} r^{2p} dx = c_p``."""
    c = 2.0 * math.pi * math.gamma(p + 1) * math.gamma(1.5) / math.gamma(p + 2.5)
    return 0.25 / c ** (1.0 / p)


# ------------------------------------------------------------- Moser


SIGMA = Fraction(1, 3)
GAIN = Fraction(10, 9)


@dataclass(frozen=True)
class MoserLadder:
    """Exponents ``p_j = 3 (10/9)^j`` on radii ``R_j = (R/2)(1 + 3^-j)``.

    ``normalized[j] = R_j^{-5/p_j} ||G||_{L^{p_j}(P(R_j))}`` and
    ``mean_normalized[j]`` divides by the cylinder volume instead; the
    latter increases to ``sup |G|`` as ``p`` grows.
    """

    exponents: tuple
    radii: tuple
    norms: tuple
    normalized: tuple
    mean_normalized: tuple
    sup_half: float

    @property
    def running_constant(self) -> float:
        """Smallest ``C`` with ``normalized[j] <= C normalized[0]`` for all ``j``."""
        if self.normalized[0] == 0:
            return 0.0 if max(self.normalized) == 0 else math.inf
        return max(self.normalized) / self.normalized[0]

    @property
    def nonincreasing(self) -> bool:
        n = self.normalized
        return all(b <= a * (1 + 1e-12) for a, b in zip(n, n[1:]))

    @property
    def top_gap(self) -> float:
        """Relative shortfall of the last mean-normalised rung below ``sup_{P(R/2)} |G|``."""
        if self.sup_half == 0:
            return 0.0
        return (self.sup_half - self.mean_normalized[-1]) / self.sup_half


def moser_exponents(J: int) -> list[Fraction]:
    return [3 * GAIN ** j for j in range(J + 1)]


def moser_radii(R: float, J: int) -> list[float]:
    return [float(Fraction(1, 2) * (1 + SIGMA ** j)) * R for j in range(J + 1)]


def moser_iterate(traj, R: float, J: int = 6, t0: float | None = None, z0: float | None = None) -> MoserLadder:
    if not 0 <= J <= 6:
        raise ValueError("J must lie in 0..6")
    exps = moser_exponents(J)
    radii = moser_radii(R, J)
    norms, normed, mean = [], [], []
    for p, Rj in zip(exps, radii):
        pf = float(p)
        I = spacetime_integral(traj, Rj, pf, t0, z0)
        norms.append(I ** (1 / pf))
        normed.append((I / Rj ** 5) ** (1 / pf))
        mean.append((I / cylinder_volume(Rj)) ** (1 / pf))
    lo, hi = cylinder_extrema(traj, R / 2, t0, z0)
    return MoserLadder(tuple(exps), tuple(radii), tuple(norms), tuple(normed), tuple(mean), max(abs(lo), abs(hi)))


def r2_ladder_oracle(p: float, radius: float) -> float:
    """``(int_{P(radius)} r^{2p})^{1/p}`` for steady ``G = r^2``."""
    c = 2.0 * math.pi * math.gamma(p + 1) * math.gamma(1.5) / math.gamma(p + 2.5)
    return (c * radius ** (2 * p + 3) * radius ** 2) ** (1 / p)


# -------------------------------------------------------------- Nash


def nash_gap(f, mu, M: float) -> tuple[float, float]:
    """``|ln E f - E ln f|`` and ``M ||ln f - E ln f||_2 / E f`` under the probability ``mu``."""
    f = np.asarray(f, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if f.shape != mu.shape:
        raise ValueError("f and mu have different shapes")
    if abs(mu.sum() - 1.0) > 1e-12 or np.any(mu < 0):
        raise ValueError("mu must be a probability vector")
    if np.any(f <= 0):
        raise ValueError("f must be strictly positive (log undefined at 0)")
    if np.any(f > M):
        raise ValueError("f exceeds the bound M")
    # expectations as shifts from the first entry, so constant f gives exactly zero on both sides
    mean_f = float(f[0] + np.dot(mu, f - f[0]))
    lf = np.log(f)
    mean_lf = float(lf[0] + np.dot(mu, lf - lf[0]))
    g = lf - mean_lf
    lhs = abs(math.log(mean_f) - mean_lf)
    rhs = M * math.sqrt(float(np.dot(mu, g * g))) / mean_f
    return lhs, rhs


# --------------------------------------------------------- Poincare


def weighted_poincare_ratio(Psi: ScalarField, zeta: CutoffPair) -> float:
    """``int |Psi - avg|^2 zeta^2 / int |grad Psi|^2 zeta^2`` with ``avg = int Psi zeta^2``."""
    grid = Psi.grid
    w = grid.cell_volumes() * zeta.phi.values
    mass = w.sum()
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"cutoff weight integrates to {mass:.6g}, expected 1")
    v = Psi.values
    mean = np.sum(w * v)
    num = float(np.sum(w * (v - mean) ** 2))
    gr, gz = _gradient(grid, v, Psi.parity)
    den = float(np.sum(w * (gr ** 2 + gz ** 2)))
    if num == 0:
        return 0.0
    return num / den


# ------------------------------------------------------ log transform


def log_transform_residual(traj, drift: VectorFieldCyl | None = None, index: int | None = None,
                           floor: float = 1e-12) -> ScalarField:
    """Discrete residual of ``Psi_t + b.grad Psi + (2/r) Psi_r - Lap Psi + |grad Psi|^2`` for ``Psi = -ln Phi``.

    Centred differences in space (even mirror at the axis, quadratic
    extrapolation at the wall) and in time; a single-snapshot trajectory
    is treated as steady.  ``index`` selects the snapshot (default: middle).
    """
    traj = _as_trajectory(traj)
    grid = traj.grid
    n = len(traj)
    k = (n // 2 if n > 2 else 0) if index is None else index
    if n > 1 and not 0 < k < n - 1:
        raise ValueError("time derivative needs neighbouring snapshots")
    for s in ([traj.snapshots[k]] if n == 1 else traj.snapshots[k - 1:k + 2]):
        if np.min(s.values) < floor:
            raise ValueError(f"Phi drops below the floor {floor:g}")
    Psi = -np.log(traj.snapshots[k].values)
    if n > 1:
        dt = (-np.log(traj.snapshots[k + 1].values) + np.log(traj.snapshots[k - 1].values)) / (
            traj.times[k + 1] - traj.times[k - 1])
    else:
        dt = 0.0
    P = np.empty((grid.nr + 2, grid.nz + 2))
    P[1:-1, 1:-1] = Psi
    P[0, 1:-1] = Psi[0]
    P[-1, 1:-1] = 3 * Psi[-1] - 3 * Psi[-2] + Psi[-3]
    P[:, 0] = P[:, -2]
    P[:, -1] = P[:, 1]
    r = grid.r[:, None]
    pr = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2 * grid.dr)
    pz = (P[1:-1, 2:] - P[1:-1, :-2]) / (2 * grid.dz)
    prr = (P[2:, 1:-1] - 2 * Psi + P[:-2, 1:-1]) / grid.dr ** 2
    pzz = (P[1:-1, 2:] - 2 * Psi + P[1:-1, :-2]) / grid.dz ** 2
    lap = prr + pr / r + pzz
    res = dt + 2.0 * pr / r - lap + pr ** 2 + pz ** 2
    if drift is not None:
        res = res + drift.vr.values * pr + drift.vz.values * pz
    return ScalarField(grid, res)


# -------------------------------------------------------- lower bounds


@dataclass(frozen=True)
class BlowdownConstants:
    """``c0`` mass threshold, ``M0`` log bound, ``delta`` lower-bound level."""

    c0: float = 0.1
    M0: float = 1.0
    delta: float = 0.4

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def lower_bound_check(traj, consts: BlowdownConstants, R: float, t0: float | None = None,
                      z0: float | None = None) -> VerifierEntry:
    """``inf_{P(R/8)} Phi`` against ``delta / 2``, gated by ``0 <= Phi <= 2`` and the mass hypothesis.

    When the hypotheses fail the entry carries ``pass = None``.
    """
    cfg = asdict(consts)
    lo, hi = cylinder_extrema(traj, R, t0, z0)
    mass = spacetime_integral(traj, R / 2, 1.0, t0, z0)
    need = consts.c0 * R ** 5
    inf8, _ = cylinder_extrema(traj, R / 8, t0, z0)
    scale = {"R": R, "mass": mass, "mass_required": need, "range": [lo, hi]}
    if lo < 0 or hi > 2 or mass < need:
        scale["hypothesis"] = "failed"
        return make_entry("lower_bound", consts.delta / 2, inf8, scale=scale, config=cfg, verdict=None)
    scale["hypothesis"] = "holds"
    return make_entry("lower_bound", consts.delta / 2, inf8, scale=scale, config=cfg)


def axis_trace(f: ScalarField) -> np.ndarray:
    """Values interpolated onto ``r = 0`` (per z)."""
    return sample(f, np.zeros(f.grid.nz), f.grid.z)


def lp_lower_bound_check(traj, p: float, R: float, a: float | None = None, t0: float | None = None,
                         z0: float | None = None, tol: float = 1e-8) -> VerifierEntry:
    """``R^{-5/p} ||Phi||_{L^p(P(R, R/2))}`` measured against positivity, axis value ``a``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    tr = _as_trajectory(traj)
    traces = np.concatenate([axis_trace(s) for s in tr.snapshots])
    a_meas = float(traces.mean())
    if np.ptp(traces) > tol * max(1.0, abs(a_meas)):
        raise ValueError("axis trace is not constant")
    if a is not None and abs(a - a_meas) > tol * max(1.0, abs(a)):
        raise ValueError(f"axis trace {a_meas} differs from the declared value {a}")
    I = spacetime_integral(tr, R, p, t0, z0, inner=R / 2)
    val = R ** (-5.0 / p) * I ** (1.0 / p)
    return make_entry("lp_lower_bound", 0.0, val, scale={"R": R, "p": p, "axis_value": a_meas},
                      verdict=bool(val > 0))


# ---------------------------------------------------------- oscillation


def normalize_phi(G: np.ndarray, m1: float, M1: float) -> tuple[np.ndarray, str]:
    """``2 (M1 - G) / J1`` if ``M1 > -m1`` else ``2 (G - m1) / J1``."""
    J1 = M1 - m1
    if M1 > -m1:
        return 2.0 * (M1 - G) / J1, "upper"
    return 2.0 * (G - m1) / J1, "lower"


def oscillation_decay_check(traj, scales: DyadicScaleSet, delta: float,
                            anchor: tuple[float, float, float] | None = None) -> list[VerifierEntry]:
    """Per adjacent pair of scales, ``J_{R/2} / J_R`` against ``1 - delta / 4``.

    The field is first renormalised to ``Phi`` on the largest cylinder; the
    ratios are those of ``Phi`` (identical to those of the field, as
    oscillation is affine invariant).  An all-zero profile passes vacuously.
    """
    traj = _as_trajectory(traj)
    prof = oscillation_profile(traj, scales, anchor)
    top = prof.scales[0]
    thr = 1.0 - delta / 4.0
    cfg = {"delta": delta, "threshold": thr}
    if top.J == 0:
        return [make_entry("oscillation_decay", 0.0, thr, scale={"R": float(top.R)}, config=cfg, verdict=None)]
    branch_holder = {}

    def to_phi(s):
        v, branch_holder["b"] = normalize_phi(s.values, top.m, top.M)
        return s.with_values(v)

    phi_prof = oscillation_profile(traj.map(to_phi), scales, prof.anchor)
    cfg["phi_branch"] = branch_holder["b"]
    out = []
    for big, small in zip(phi_prof.scales, phi_prof.scales[1:]):
        ratio = small.J / big.J if big.J > 0 else 0.0
        out.append(make_entry("oscillation_decay", ratio, thr, scale={"R": big.R, "R_half": small.R,
                                                                       "J": big.J, "J_half": small.J},
                              config=dict(cfg)))
    return out


def decay_margin(entries: list[VerifierEntry]) -> float:
    """``eta = 1 - max ratio`` over non-vacuous oscillation entries."""
    vals = [e.lhs for e in entries if e.passed is not None]
    return 1.0 - max(vals) if vals else 1.0
