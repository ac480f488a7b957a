"""Scale-invariant drift norms and oscillation moduli on parabolic cylinders."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .drift import DriftDecomposition
from .grid import (Grid, ParabolicCylinder, ScalarField, Trajectory, VectorFieldCyl, _periodic_dz,
                   ball_weights, check_ball, sample)

#: inner/outer ratio of the hollowed annulus ``B_{2R} minus B_{R/8}``
HOLLOW_OUTER = 2.0
HOLLOW_INNER = 1.0 / 8.0


class CoverageError(ValueError):
    """A parabolic cylinder reaches before the start (or past the end) of a trajectory."""


@dataclass(frozen=True)
class DyadicScaleSet:
    """Radii ``R_j = r0 * 2**-j`` for ``j = 0..levels``."""

    r0: float = 1.0
    levels: int = 3

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if self.levels < 3:
            raise ValueError("need at least 4 scales (levels >= 3)")

    @property
    def radii(self) -> np.ndarray:
        return self.r0 * 2.0 ** -np.arange(self.levels + 1)

    def scaled(self, factor: float) -> "DyadicScaleSet":
        return DyadicScaleSet(self.r0 * factor, self.levels)

    def check_safe(self, grid: Grid, fraction: float = 0.25) -> None:
        """Largest radius must stay in the region away from the outer wall."""
        if self.r0 > fraction * grid.r_max * (1 + 1e-12):
            raise ValueError(f"largest radius {self.r0} exceeds {fraction} r_max = {fraction * grid.r_max}")


def _as_trajectory(obj) -> Trajectory:
    if isinstance(obj, Trajectory):
        return obj
    return Trajectory(np.array([0.0]), (obj,))


def _window(traj: Trajectory, t0: float | None, duration: float, steady_ok: bool = True) -> np.ndarray:
    """Snapshot indices in ``(t0 - duration, t0]``; single-snapshot trajectories count as steady."""
    if len(traj) == 1 and steady_ok:
        return np.array([0])
    t0 = traj.times[-1] if t0 is None else t0
    cyl = ParabolicCylinder(math.sqrt(duration), 0.0, t0)
    if not cyl.covered_by(traj):
        raise CoverageError(f"trajectory span {traj.span} does not cover ({t0 - duration:.4g}, {t0:.4g}]")
    idx = traj.window_indices(t0, duration)
    if idx.size == 0:
        raise CoverageError("no snapshot inside the time window")
    return idx


# ---------------------------------------------------------------- HSE


def annulus_weights(grid: Grid, R: float, z0: float | None = None) -> np.ndarray:
    """Measure of ``B_{2R} minus B_{R/8}`` per cell, centred on the axis."""
    centre = (0.0, grid.z_mid if z0 is None else z0)
    check_ball(grid, HOLLOW_OUTER * R, centre)
    return ball_weights(grid, HOLLOW_OUTER * R, centre) - ball_weights(grid, HOLLOW_INNER * R, centre)


def hollowed_scaled_energy(b1, scales: DyadicScaleSet, t0: float | None = None, z0: float | None = None,
                           per_scale: bool = False):
    """``max_R sup_t (1/R) int_{B_2R minus B_R/8} |b1|^2``.

    ``b1`` is a radial-axial field, a trajectory of them, or a
    :class:`DriftDecomposition` (its ``b1`` part is used).  For a
    trajectory the supremum runs over snapshots in ``(t0 - R^2, t0]``.
    """
    if isinstance(b1, DriftDecomposition):
        b1 = b1.b1
    traj = _as_trajectory(b1)
    grid = traj.grid
    vals = []
    for R in scales.radii:
        w = annulus_weights(grid, R, z0)
        idx = _window(traj, t0, R * R)
        e = max(float(np.sum(w * traj.snapshots[k].magnitude() ** 2)) for k in idx) / R
        vals.append(e)
    return (max(vals), vals) if per_scale else max(vals)


# ---------------------------------------------------------------- BMO


@dataclass(frozen=True)
class BallFamily:
    """Balls ``(r_c, z_c, rho)`` used by :func:`bmo_seminorm`.

    Radii halve from ``rho_max`` while at least ``min_cells`` cells span the
    radius.  Centres sit on a lattice of spacing ``rho`` anchored at
    ``(0, z0)``; balls stay inside ``r <= r_max`` and do not cross the
    periodic seam in z.
    """

    balls: tuple

    @classmethod
    def build(cls, grid: Grid, rho_max: float | None = None, min_cells: int = 4,
              z0: float | None = None) -> "BallFamily":
        z0 = grid.z_mid if z0 is None else z0
        h = max(grid.dr, grid.dz)
        if rho_max is None:
            rho_max = min(grid.r_max, grid.z_len) / 4.0
        balls = []
        rho = rho_max
        while rho >= min_cells * h * (1 - 1e-12):
            rcs = np.arange(0, grid.r_max - rho + 1e-12 * grid.r_max, rho)
            m_lo = math.ceil((rho - z0) / rho - 1e-9)
            m_hi = math.floor((grid.z_len - rho - z0) / rho + 1e-9)
            for rc in rcs:
                for m in range(m_lo, m_hi + 1):
                    balls.append((float(rc), float(z0 + m * rho), float(rho)))
            rho /= 2.0
        if not balls:
            raise ValueError("grid too coarse for any ball in the family")
        return cls(tuple(balls))

    def __len__(self) -> int:
        return len(self.balls)


def mean_oscillation(B: ScalarField, rc: float, zc: float, rho: float) -> float:
    w = ball_weights(B.grid, rho, (rc, zc))
    vol = w.sum()
    mean = np.sum(w * B.values) / vol
    return float(np.sum(w * np.abs(B.values - mean)) / vol)


def bmo_seminorm(B, rho_max: float | None = None, min_cells: int = 4, z0: float | None = None,
                 t0: float | None = None, window: float | None = None) -> float:
    """Largest mean oscillation ``avg_ball |B - avg_ball B|`` over the :class:`BallFamily`.

    This is a lower bound for the true seminorm.  A trajectory gives the
    supremum over its snapshots (optionally those in ``(t0 - window, t0]``).
    """
    if isinstance(B, DriftDecomposition):
        B = B.stream_B
    traj = _as_trajectory(B)
    idx = np.arange(len(traj)) if window is None else _window(traj, t0, window)
    family = BallFamily.build(traj.grid, rho_max, min_cells, z0)
    best = 0.0
    for k in idx:
        f = traj.snapshots[k]
        if np.ptp(f.values) == 0:
            continue
        for rc, zc, rho in family.balls:
            best = max(best, mean_oscillation(f, rc, zc, rho))
    return best


def sup_r_abs(b3) -> float:
    """``max r |b3|`` over cells and snapshots."""
    if isinstance(b3, DriftDecomposition):
        b3 = b3.b3
    traj = _as_trajectory(b3)
    r = traj.grid.r[:, None]
    return max(float(np.max(r * s.magnitude())) for s in traj.snapshots)


@dataclass(frozen=True)
class ENormReport:
    hse: float
    bmo: float
    sup_rb3: float

    def __post_init__(self):
        if min(self.hse, self.bmo, self.sup_rb3) < 0:
            raise ValueError("norm components must be nonnegative")

    @property
    def total(self) -> float:
        return self.hse + self.bmo + self.sup_rb3

    def as_dict(self) -> dict:
        return {"hse": self.hse, "bmo": self.bmo, "sup_rb3": self.sup_rb3, "e_norm": self.total}


def e_norm(b: DriftDecomposition, scales: DyadicScaleSet, rho_max: float | None = None) -> ENormReport:
    """``HSE(b1) + BMO(B) + sup r|b3|`` for a steady decomposition."""
    return ENormReport(hollowed_scaled_energy(b.b1, scales), bmo_seminorm(b.stream_B, rho_max), sup_r_abs(b.b3))


def john_nirenberg_ratio(B: ScalarField, p: float, R: float, bmo: float | None = None,
                         center: tuple[float, float] | None = None, **family) -> float:
    """``||B - avg B||_{L^p(B_R)} / (BMO(B) |B_R|^{1/p})``."""
    bmo = bmo_seminorm(B, **family) if bmo is None else bmo
    if bmo <= 0:
        raise ValueError("BMO seminorm vanishes; ratio undefined")
    grid = B.grid
    centre = (0.0, grid.z_mid) if center is None else center
    check_ball(grid, R, centre)
    w = ball_weights(grid, R, centre)
    vol = w.sum()
    mean = np.sum(w * B.values) / vol
    lp = np.sum(w * np.abs(B.values - mean) ** p) ** (1.0 / p)
    return float(lp / (bmo * vol ** (1.0 / p)))


# -------------------------------------------------------- oscillation

#: boundary points sampled per unit of (ball radius / cell size) on the meridional semicircle
BOUNDARY_DENSITY = 8


@dataclass(frozen=True)
class ScaleOscillation:
    R: float
    m: float
    M: float
    cells: int
    snapshots: int

    @property
    def J(self) -> float:
        return self.M - self.m


@dataclass(frozen=True)
class OscillationProfile:
    """Per-scale ``(R, m_R, M_R, J_R)``, largest radius first."""

    scales: tuple
    anchor: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for s in self.scales:
            if s.m > s.M:
                raise ValueError("inf exceeds sup")

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.R for s in self.scales])

    @property
    def J(self) -> np.ndarray:
        return np.array([s.J for s in self.scales])

    def ratios(self) -> np.ndarray:
        J = self.J
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(J[:-1] > 0, J[1:] / np.where(J[:-1] > 0, J[:-1], 1.0), np.nan)

    def as_rows(self) -> list[dict]:
        return [{"R": s.R, "m": s.m, "M": s.M, "J": s.J} for s in self.scales]


def _ball_points(grid: Grid, R: float, z0: float):
    """Cells inside the ball plus interpolation points on its meridional boundary."""
    R_, Z_ = grid.mesh()
    inside = R_ ** 2 + _periodic_dz(grid, Z_, z0) ** 2 <= R * R
    n = max(16, int(BOUNDARY_DENSITY * R / min(grid.dr, grid.dz)))
    th = np.linspace(0.0, math.pi, n)
    rb = np.clip(R * np.sin(th), 0.0, None)
    zb = z0 + R * np.cos(th)
    return inside, rb, zb


def oscillation_profile(traj, scales: DyadicScaleSet, anchor: tuple[float, float, float] | None = None,
                        component: str | None = None) -> OscillationProfile:
    """Exact discrete inf/sup of the field over the nested cylinders ``P(R)``.

    Values are the cell values inside ``B_R`` plus bilinear samples on the
    boundary sphere, taken over snapshots with ``t0 - R^2 < t <= t0``.  The
    extrema are accumulated from the smallest cylinder outwards, so
    ``J_R`` is monotone in ``R`` by construction.
    """
    traj = _as_trajectory(traj)
    grid = traj.grid
    r0, z0, t0 = anchor if anchor is not None else (0.0, grid.z_mid, float(traj.times[-1]))
    if r0 != 0.0:
        raise ValueError("oscillation cylinders are anchored on the axis")
    out = []
    m, M = math.inf, -math.inf
    for R in scales.radii[::-1]:
        check_ball(grid, R, (0.0, z0))
        idx = _window(traj, t0, R * R)
        inside, rb, zb = _ball_points(grid, R, z0)
        for k in idx:
            s = traj.snapshots[k]
            f = getattr(s, component) if component else s
            vals = np.concatenate([f.values[inside], sample(f, rb, zb)])
            m = min(m, float(vals.min()))
            M = max(M, float(vals.max()))
        out.append(ScaleOscillation(float(R), m, M, int(inside.sum()), int(idx.size)))
    return OscillationProfile(tuple(out[::-1]), (r0, z0, t0))


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    c: float
    residual: float
    used: int

    def __iter__(self):
        return iter((self.alpha, self.c, self.residual))


MIN_CYLINDER_SAMPLES = 4 ** 3


def holder_fit(profile: OscillationProfile) -> HolderFit:
    """Least-squares slope of ``log J_R`` against ``log R``.

    The finest scale is dropped when its cylinder holds fewer than
    ``4**3`` cell-snapshot samples.  An identically zero profile returns
    ``alpha = inf``.
    """
    scales = list(profile.scales)
    if all(s.J == 0 for s in scales):
        return HolderFit(math.inf, 0.0, 0.0, 0)
    finest = min(scales, key=lambda s: s.R)
    if finest.cells * finest.snapshots < MIN_CYLINDER_SAMPLES:
        scales.remove(finest)
    usable = [s for s in scales if s.J > 0]
    if len(usable) < 3:
        raise ValueError(f"need >= 3 scales with positive oscillation, have {len(usable)}")
    x = np.log([s.R for s in usable])
    y = np.log([s.J for s in usable])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    resid = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return HolderFit(float(slope), float(math.exp(intercept)), resid, len(usable))


def synthetic_profile(radii, J) -> OscillationProfile:
    """Profile with prescribed oscillations (``m = 0``), for fitting tests."""
    rows = tuple(ScaleOscillation(float(R), 0.0, float(j), 10 ** 6, 1) for R, j in zip(radii, J))
    return OscillationProfile(rows)
