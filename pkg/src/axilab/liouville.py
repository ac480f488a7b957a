"""Blow-up rescaling diagnostics.

A candidate ``(x_k, t_k, Q_k)`` defines the rescaled velocity
``v_k(x, t) = v(x_k + x / Q_k, t_k + t / Q_k^2) / Q_k``.  The rescaled
field is still axisymmetric about the original axis, which now sits at
distance ``Q_k r_k`` from the new origin.  It is stored on a target grid
whose radial coordinate is the (rescaled) distance to that axis and
whose axial coordinate is centred on ``z_k``.  With these coordinates
``r v^theta`` and the stream function are carried over pointwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import EVEN, ODD, Grid, ScalarField, Trajectory, VectorFieldCyl, ball_weights, check_ball, pad, sample

COMPONENTS = ("vr", "vtheta", "vz")


@dataclass(frozen=True)
class BlowupCandidate:
    """Point ``(r_k, z_k)`` and time ``t_k`` where ``|v| = Q_k = gamma_k * (running max)``."""

    r_k: float
    z_k: float
    t_k: float
    Q: float
    gamma: float
    index: int

    def as_dict(self) -> dict:
        return {"r_k": self.r_k, "z_k": self.z_k, "t_k": self.t_k, "Q": self.Q, "gamma": self.gamma,
                "index": self.index, "rk_qk": self.r_k * self.Q}


def select_candidates(traj: Trajectory, gamma_min: float = 0.9, region_fraction: float = 0.25,
                      rtol: float = 1e-9) -> list[BlowupCandidate]:
    """Scan snapshots in time order for near-maximal speeds.

    The speed is searched over cells with ``r <= region_fraction * r_max``.
    A snapshot is emitted when its maximum is at least ``gamma_min`` times
    the running maximum and exceeds the last emitted speed by more than
    ``rtol`` (relative).  Ties go to the smallest ``(r, z)``.
    """
    if not 0 < gamma_min <= 1:
        raise ValueError("gamma_min must lie in (0, 1]")
    grid = traj.grid
    rows = grid.r <= region_fraction * grid.r_max
    if not rows.any():
        raise ValueError("diagnostic region holds no cells")
    out: list[BlowupCandidate] = []
    running = 0.0
    last = 0.0
    for k, (t, v) in enumerate(zip(traj.times, traj.snapshots)):
        speed = v.magnitude()[rows]
        q = float(speed.max())
        running = max(running, q)
        if q == 0:
            continue
        if q >= gamma_min * running and q > last * (1 + rtol):
            i, j = np.unravel_index(np.argmax(speed), speed.shape)
            out.append(BlowupCandidate(float(grid.r[i]), float(grid.z[j]), float(t), q, q / running, k))
            last = q
    return out


def case_label(candidate: BlowupCandidate, threshold: float = 10.0) -> str:
    """``"bounded"`` if ``r_k Q_k <= threshold`` else ``"unbounded"``."""
    return "bounded" if candidate.r_k * candidate.Q <= threshold else "unbounded"


# -------------------------------------------------------------- rescale


@dataclass(frozen=True, eq=False)
class RescaledTrajectory:
    """Rescaled field on ``target``; the rescaled origin sits at ``(origin_r, origin_z)``."""

    source: Trajectory
    candidate: BlowupCandidate
    traj: Trajectory
    origin_r: float
    origin_z: float

    @property
    def grid(self) -> Grid:
        return self.traj.grid

    def gamma(self) -> Trajectory:
        r = self.grid.r[:, None]
        return self.traj.map(lambda v: ScalarField(self.grid, r * v.vtheta.values, EVEN))


def source_point(c: BlowupCandidate, target: Grid, rho, zeta):
    """Source ``(r, z)`` of target point ``(rho, zeta)``."""
    return np.asarray(rho) / c.Q, c.z_k + (np.asarray(zeta) - target.z_mid) / c.Q


def _time_blend(source: Trajectory, t: float):
    times = source.times
    tol = 1e-9 * max(1.0, abs(t))
    if t < times[0] - tol or t > times[-1] + tol:
        raise ValueError(f"time {t:.6g} outside the source span {source.span}")
    if len(times) == 1:
        return 0, 0, 0.0
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    w = (t - times[k]) / (times[k + 1] - times[k])
    return k, k + 1, float(np.clip(w, 0.0, 1.0))


def rescale(source: Trajectory, c: BlowupCandidate, target: Grid, window: float, count: int = 9) -> RescaledTrajectory:
    """Sample ``v_k`` on ``target`` at ``count`` instants spanning ``[-window, 0]``."""
    if not source.is_vector:
        raise ValueError("rescaling acts on velocity trajectories")
    rs, zs = source_point(c, target, target.r, target.z)
    if rs.max() >= source.grid.r_max:
        raise ValueError("target grid reaches beyond the source outer radius")
    R, Z = np.meshgrid(rs, zs, indexing="ij")
    taus = np.linspace(-window, 0.0, count) if count > 1 else np.array([0.0])
    snaps = []
    for tau in taus:
        k0, k1, w = _time_blend(source, c.t_k + tau / c.Q ** 2)
        comps = []
        for name in COMPONENTS:
            a = sample(getattr(source.snapshots[k0], name), R, Z)
            b = sample(getattr(source.snapshots[k1], name), R, Z) if w > 0 else a
            comps.append(((1 - w) * a + w * b) / c.Q)
        snaps.append(VectorFieldCyl.from_arrays(target, *comps))
    traj = Trajectory(taus, tuple(snaps))
    return RescaledTrajectory(source, c, traj, c.Q * c.r_k, target.z_mid)


# ----------------------------------------------------------- residuals


def swirl_residual(rt: RescaledTrajectory, gamma_bound: float | None = None) -> dict:
    """Largest ``|v_k^theta|`` near the rescaled origin against ``C / (Q_k r_k)``.

    The supremum is taken over the meridional disk of radius ``Q_k r_k / 2``
    about the origin (source radii at least ``r_k / 2``).  ``C`` defaults to
    ``sup |r v^theta|`` of the source.
    """
    c = rt.candidate
    if gamma_bound is None:
        r = rt.source.grid.r[:, None]
        gamma_bound = max(float(np.max(np.abs(r * s.vtheta.values))) for s in rt.source.snapshots)
    a = rt.origin_r
    R, Z = rt.grid.mesh()
    disk = (R - a) ** 2 + (Z - rt.origin_z) ** 2 <= (0.5 * a) ** 2
    if a > 0 and not disk.any():
        raise ValueError("target grid too coarse to resolve the disk about the origin")
    measured = 0.0
    for s in rt.traj.snapshots:
        vt = np.abs(s.vtheta.values)
        measured = max(measured, float(vt[disk].max()) if a > 0 else float(vt.max()))
    bound = gamma_bound / (c.Q * c.r_k) if c.r_k > 0 else math.inf
    return {"measured": measured, "bound": bound, "ratio": measured / bound if bound > 0 else 0.0,
            "gamma_bound": gamma_bound}


def cartesian_velocity(rt_snapshot: VectorFieldCyl, origin_r: float, origin_z: float, x: np.ndarray) -> np.ndarray:
    """Cartesian components at rescaled points ``x`` (shape ``(..., 3)``), origin at the candidate."""
    X1 = x[..., 0] + origin_r
    X2 = x[..., 1]
    rho = np.hypot(X1, X2)
    zeta = x[..., 2] + origin_z
    with np.errstate(invalid="ignore", divide="ignore"):
        cph = np.where(rho > 0, X1 / rho, 1.0)
        sph = np.where(rho > 0, X2 / rho, 0.0)
    ur = sample(rt_snapshot.vr, rho, zeta)
    ut = sample(rt_snapshot.vtheta, rho, zeta)
    uz = sample(rt_snapshot.vz, rho, zeta)
    return np.stack([ur * cph - ut * sph, ur * sph + ut * cph, uz], axis=-1)


def _ball_lattice(radius: float, n: int = 9) -> np.ndarray:
    s = np.linspace(-radius, radius, n)
    P = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3)
    return P[np.sum(P ** 2, axis=1) <= radius ** 2 + 1e-12]


def planar_residual(rt: RescaledTrajectory, nu_perp=(0.0, 1.0, 0.0), radius: float | None = None,
                    step: float | None = None) -> float:
    """RMS of ``(nu_perp . grad) v_k`` over a ball about the origin and all snapshots.

    ``nu_perp`` is in the rescaled Cartesian frame whose first axis is
    ``e_r(x_k)``; the default is the horizontal direction orthogonal to it.
    Derivatives are centred differences of interpolated values.
    """
    d = np.asarray(nu_perp, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    grid = rt.grid
    h = min(grid.dr, grid.dz) if step is None else step
    if radius is None:
        radius = min(0.5 * rt.origin_r if rt.origin_r > 0 else grid.r_max / 4, grid.z_len / 4)
    pts = _ball_lattice(radius)
    acc = []
    for s in rt.traj.snapshots:
        up = cartesian_velocity(s, rt.origin_r, rt.origin_z, pts + h * d)
        um = cartesian_velocity(s, rt.origin_r, rt.origin_z, pts - h * d)
        acc.append(np.sum(((up - um) / (2 * h)) ** 2, axis=1))
    return float(np.sqrt(np.mean(np.concatenate(acc))))


def constancy_residual(traj) -> float:
    """Max over snapshots of the summed volume-weighted spatial std of the components."""
    tr = traj.traj if isinstance(traj, RescaledTrajectory) else traj
    w = tr.grid.cell_volumes()
    w = w / w.sum()
    worst = 0.0
    for s in tr.snapshots:
        total = 0.0
        for name in COMPONENTS:
            v = getattr(s, name).values
            m = np.sum(w * v)
            total += math.sqrt(max(float(np.sum(w * (v - m) ** 2)), 0.0))
        worst = max(worst, total)
    return worst


# ---------------------------------------------------------- mean value


def axisymmetric_laplacian(f: ScalarField) -> np.ndarray:
    """Centred ``f_rr + f_r / r + f_zz`` with parity ghost and quadratic wall extrapolation."""
    grid = f.grid
    P = pad(f.values, f.parity, "extrapolate")
    P[-1, 1:-1] = 3 * f.values[-1] - 3 * f.values[-2] + f.values[-3]
    u = f.values
    frr = (P[2:, 1:-1] - 2 * u + P[:-2, 1:-1]) / grid.dr ** 2
    fr = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2 * grid.dr)
    fzz = (P[1:-1, 2:] - 2 * u + P[1:-1, :-2]) / grid.dz ** 2
    return frr + fr / grid.r[:, None] + fzz


def harmonic_mean_value_check(B: ScalarField, r0: float | None = None, levels: int = 3,
                              z0: float | None = None, flag_tol: float = 1e-6, min_cells: int = 4) -> dict:
    """Compare axis-centred ball averages with the centre value.

    The Laplacian residual (scaled by ``r0^2 / sup|B|``) decides the
    ``harmonic`` flag.  Radii ``r0 2^-j`` spanning at least ``min_cells``
    cells each report the mean, the centre value and the defect
    ``|mean - centre| / sup_ball |B - centre|``.
    """
    grid = B.grid
    z0 = grid.z_mid if z0 is None else z0
    r0 = min(grid.r_max, grid.z_len / 2) / 4 if r0 is None else r0
    R_, Z_ = grid.mesh()
    big = (R_ ** 2 + (Z_ - z0) ** 2) <= r0 ** 2
    scale = float(np.max(np.abs(B.values[big]))) if big.any() else 0.0
    lap = np.abs(axisymmetric_laplacian(B))[big]
    lap_res = float(lap.max()) * r0 ** 2 / scale if scale > 0 else 0.0
    centre = float(sample(B, 0.0, z0))
    h = max(grid.dr, grid.dz)
    rows = []
    for j in range(levels + 1):
        R = r0 * 2.0 ** -j
        if j > 0 and R < min_cells * h:
            break
        check_ball(grid, R, (0.0, z0))
        w = ball_weights(grid, R, (0.0, z0))
        mean = float(np.sum(w * B.values) / w.sum())
        osc = float(np.max(np.abs(B.values[w > 0] - centre)))
        defect = abs(mean - centre) / osc if osc > 0 else 0.0
        rows.append({"R": R, "mean": mean, "centre": centre, "defect": defect})
    return {"laplacian_residual": lap_res, "harmonic": bool(lap_res <= flag_tol),
            "per_radius": rows, "max_defect": max(r["defect"] for r in rows)}


def liouville_section(source: Trajectory, target: Grid | None = None, gamma_min: float = 0.9,
                      window: float = 0.0, threshold: float = 10.0, stream: ScalarField | None = None) -> dict:
    """Report block: candidates, case label of the last one and its residuals."""
    cands = select_candidates(source, gamma_min)
    out: dict = {"candidates": [c.as_dict() for c in cands]}
    if not cands:
        out.update({"rk_qk": None, "case_label": None, "swirl_residual": None, "planar_residual": None,
                    "constancy_residual": None})
    else:
        c = cands[-1]
        g = source.grid
        if target is None:
            # a box of a few rescaled radii keeps the disk about the origin resolved
            r_t = min(g.r_max * c.Q * 0.99, 4 * c.Q * c.r_k)
            target = Grid(g.nr, g.nz, r_t, min(g.z_len * c.Q, 2 * r_t))
        count = 1 if window == 0 else 9
        rt = rescale(source, c, target, window, count)
        out.update({"rk_qk": c.r_k * c.Q, "case_label": case_label(c, threshold),
                    "swirl_residual": swirl_residual(rt)["measured"],
                    "planar_residual": planar_residual(rt),
                    "constancy_residual": constancy_residual(rt)})
    out["mean_value_defect"] = harmonic_mean_value_check(stream)["max_defect"] if stream is not None else None
    return out
