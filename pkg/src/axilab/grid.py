"""Discrete geometry for axisymmetric fields on a uniform (r, z) mesh.

Unknowns live at cell centres ``r_i = (i + 1/2) dr`` and ``z_j = (j + 1/2) dz``,
so no unknown sits on the symmetry axis.  The axial direction is periodic.
Behaviour across ``r = 0`` is carried by the declared parity of each field:
an even field is mirrored, an odd field is mirrored with a sign flip.

Three-dimensional integrals are weighted sums with the cylindrical measure
``2 pi r dr dz``.  Balls centred on the axis carry the exact volume of
each cell ring inside them; off-axis balls use the arc of each ring through
its cell centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

EVEN = "even"
ODD = "odd"
PARITIES = (EVEN, ODD)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh on ``[0, r_max] x [0, z_len)``, periodic in z."""

    nr: int
    nz: int
    r_max: float
    z_len: float
    ghost_layers: int = 1

    def __post_init__(self):
        if self.nr < 8 or self.nz < 8:
            raise ValueError(f"grid too small: nr={self.nr}, nz={self.nz} (need >= 8)")
        if not (self.r_max > 0 and self.z_len > 0):
            raise ValueError(f"grid lengths must be positive: r_max={self.r_max}, z_len={self.z_len}")
        if self.ghost_layers < 1:
            raise ValueError("ghost_layers must be >= 1")

    @property
    def dr(self) -> float:
        return self.r_max / self.nr

    @property
    def dz(self) -> float:
        return self.z_len / self.nz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nr, self.nz)

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.nr) + 0.5) * self.dr

    @property
    def z(self) -> np.ndarray:
        return (np.arange(self.nz) + 0.5) * self.dz

    @property
    def r_faces(self) -> np.ndarray:
        """Radii of the ``nr + 1`` radial cell faces, from the axis to the wall."""
        return np.arange(self.nr + 1) * self.dr

    @property
    def z_mid(self) -> float:
        """Default axial anchor for balls and cylinders."""
        return 0.5 * self.z_len

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.z, indexing="ij")

    def cell_volumes(self) -> np.ndarray:
        return np.outer(2.0 * math.pi * self.r * self.dr, np.full(self.nz, self.dz))

    def scaled(self, factor: float) -> "Grid":
        """Same index layout with every length multiplied by ``factor``."""
        return replace(self, r_max=self.r_max * factor, z_len=self.z_len * factor)


def make_grid(nr: int, nz: int, r_max: float, z_len: float) -> Grid:
    return Grid(int(nr), int(nz), float(r_max), float(z_len))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centred scalar with declared parity at ``r = 0``.

    ``ghost`` holds the axis ghost layers once :func:`axis_fill` has run;
    row ``k`` sits at ``r = -(k + 1/2) dr``.
    """

    grid: Grid
    values: np.ndarray
    parity: str = EVEN
    ghost: np.ndarray | None = None

    def __post_init__(self):
        if self.parity not in PARITIES:
            raise ValueError(f"unknown parity {self.parity!r}")
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)
        if self.ghost is not None:
            object.__setattr__(self, "ghost", _frozen(self.ghost))

    @property
    def sign(self) -> float:
        return 1.0 if self.parity == EVEN else -1.0

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.parity)

    @classmethod
    def zeros(cls, grid: Grid, parity: str = EVEN) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), parity)

    @classmethod
    def from_function(cls, grid: Grid, func, parity: str = EVEN) -> "ScalarField":
        R, Z = grid.mesh()
        return cls(grid, np.broadcast_to(func(R, Z), grid.shape), parity)


@dataclass(frozen=True, eq=False)
class VectorFieldCyl:
    """Cylindrical components ``(v^r, v^theta, v^z)`` with parities (odd, odd, even).

    ``wall`` names the outer-face rule used by the divergence: ``"extrapolate"``
    for free-standing analytic fields, ``"closed"`` for flows confined by a
    no-penetration wall at ``r_max``.
    """

    vr: ScalarField
    vtheta: ScalarField
    vz: ScalarField
    wall: str = "extrapolate"

    def __post_init__(self):
        for name, comp, par in (("vr", self.vr, ODD), ("vtheta", self.vtheta, ODD), ("vz", self.vz, EVEN)):
            if comp.parity != par:
                raise ValueError(f"{name} must have {par} parity, got {comp.parity}")
        if not (self.vr.grid == self.vtheta.grid == self.vz.grid):
            raise ValueError("components live on different grids")
        if self.wall not in ("extrapolate", "closed"):
            raise ValueError(f"unknown wall rule {self.wall!r}")

    @property
    def grid(self) -> Grid:
        return self.vr.grid

    @classmethod
    def from_arrays(cls, grid: Grid, vr, vtheta, vz, wall: str = "extrapolate") -> "VectorFieldCyl":
        return cls(ScalarField(grid, vr, ODD), ScalarField(grid, vtheta, ODD), ScalarField(grid, vz, EVEN), wall)

    @classmethod
    def zeros(cls, grid: Grid, wall: str = "extrapolate") -> "VectorFieldCyl":
        z = np.zeros(grid.shape)
        return cls.from_arrays(grid, z, z, z, wall)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.vr.values ** 2 + self.vtheta.values ** 2 + self.vz.values ** 2)

    def __add__(self, other: "VectorFieldCyl") -> "VectorFieldCyl":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        wall = "closed" if self.wall == other.wall == "closed" else "extrapolate"
        return VectorFieldCyl.from_arrays(
            self.grid,
            self.vr.values + other.vr.values,
            self.vtheta.values + other.vtheta.values,
            self.vz.values + other.vz.values,
            wall,
        )


Snapshot = Union[ScalarField, VectorFieldCyl]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered stack of snapshots of one field kind."""

    times: np.ndarray
    snapshots: tuple = field(default_factory=tuple)
    cadence_tol: float = 1e-6

    def __post_init__(self):
        times = _frozen(self.times)
        snaps = tuple(self.snapshots)
        if len(snaps) == 0:
            raise ValueError("trajectory is empty")
        if times.shape != (len(snaps),):
            raise ValueError("times and snapshots are misaligned")
        if len(times) > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise ValueError("times must be strictly increasing")
            if np.ptp(steps) > self.cadence_tol * max(steps.mean(), 1e-300) + 1e-14:
                raise ValueError("snapshot cadence is not uniform")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "snapshots", snaps)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def is_vector(self) -> bool:
        return isinstance(self.snapshots[0], VectorFieldCyl)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def stack(self, component: str | None = None) -> np.ndarray:
        """Values as a ``(T, nr, nz)`` array; vector trajectories need ``component``."""
        if self.is_vector:
            if component is None:
                raise ValueError("vector trajectory: name a component")
            return np.stack([getattr(s, component).values for s in self.snapshots])
        return np.stack([s.values for s in self.snapshots])

    def window_indices(self, t0: float, duration: float) -> np.ndarray:
        """Snapshot indices with ``t0 - duration < t <= t0``."""
        eps = 1e-9 * max(abs(t0), duration, 1e-12)
        sel = (self.times > t0 - duration + eps) & (self.times <= t0 + eps)
        return np.flatnonzero(sel)

    def map(self, func) -> "Trajectory":
        return Trajectory(self.times, tuple(func(s) for s in self.snapshots), self.cadence_tol)

    @classmethod
    def steady(cls, snapshot: Snapshot, t_end: float, count: int) -> "Trajectory":
        """``count`` copies of one snapshot ending at ``t_end`` over ``[0, t_end]``."""
        times = np.linspace(0.0, t_end, count)
        return cls(times, (snapshot,) * count)


@dataclass(frozen=True)
class ParabolicCylinder:
    """``B_R(centre) x (t0 - R^2, t0]``; ``inner`` > 0 hollows out ``B_inner``."""

    radius: float
    z0: float
    t0: float
    r0: float = 0.0
    inner: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if not 0.0 <= self.inner < self.radius:
            raise ValueError("inner radius must lie in [0, radius)")

    @property
    def duration(self) -> float:
        return self.radius ** 2

    def covered_by(self, traj: Trajectory) -> bool:
        t_lo, t_hi = traj.span
        tol = 1e-9 * max(self.duration, 1.0)
        return t_lo <= self.t0 - self.duration + tol and self.t0 <= t_hi + tol

    def spatial_mask(self, grid: Grid) -> np.ndarray:
        d2 = _dist2(grid, self.r0, self.z0)
        mask = d2 <= self.radius ** 2
        if self.inner > 0:
            mask &= d2 > self.inner ** 2
        return mask


def _periodic_dz(grid: Grid, z, z0: float):
    L = grid.z_len
    return (np.asarray(z) - z0 + 0.5 * L) % L - 0.5 * L


def _dist2(grid: Grid, r0: float, z0: float) -> np.ndarray:
    """Squared meridional distance of cell centres from ``(r0, z0)``."""
    R, Z = grid.mesh()
    return (R - r0) ** 2 + _periodic_dz(grid, Z, z0) ** 2


# ---------------------------------------------------------------- ghosts


def axis_fill(f: ScalarField) -> ScalarField:
    """Populate the axis ghost layers by (signed) mirroring across ``r = 0``."""
    g = f.grid.ghost_layers
    ghost = f.sign * f.values[:g, :]
    return ScalarField(f.grid, f.values, f.parity, ghost)


def pad(values: np.ndarray, parity: str, wall: str = "extrapolate", wall_value=0.0) -> np.ndarray:
    """One ghost layer on every side: parity at the axis, ``wall`` rule at ``r_max``, periodic z.

    ``wall`` is ``"extrapolate"`` (linear), ``"dirichlet"`` (face value
    ``wall_value``) or ``"neumann"`` (zero normal derivative).
    """
    sign = 1.0 if parity == EVEN else -1.0
    nr, nz = values.shape
    out = np.empty((nr + 2, nz + 2))
    out[1:-1, 1:-1] = values
    out[0, 1:-1] = sign * values[0]
    if wall == "extrapolate":
        out[-1, 1:-1] = 2.0 * values[-1] - values[-2]
    elif wall == "dirichlet":
        out[-1, 1:-1] = 2.0 * np.asarray(wall_value) - values[-1]
    elif wall == "neumann":
        out[-1, 1:-1] = values[-1]
    else:
        raise ValueError(f"unknown wall rule {wall!r}")
    out[:, 0] = out[:, -2]
    out[:, -1] = out[:, 1]
    return out


# --------------------------------------------------------- interpolation


def sample(f: ScalarField, r, z) -> np.ndarray:
    """Vectorised bilinear interpolation at points ``(r, z)``.

    Below the first cell centre the parity ghost is used; beyond the last
    cell centre the last two cells are extrapolated linearly.
    """
    grid = f.grid
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(r < 0) or np.any(r >= grid.r_max + 1e-12 * grid.r_max):
        raise ValueError("interpolation radius outside [0, r_max)")
    s = r / grid.dr - 0.5
    i0 = np.clip(np.floor(s).astype(int), -1, grid.nr - 2)
    wr = s - i0
    t = (np.mod(z, grid.z_len)) / grid.dz - 0.5
    j0 = np.floor(t).astype(int)
    wz = t - j0
    j0 %= grid.nz
    j1 = (j0 + 1) % grid.nz
    vals = f.values

    def col(i, j):
        ghost = i < 0
        ii = np.where(ghost, 0, i)
        v = vals[ii, j]
        return np.where(ghost, f.sign * v, v)

    lo = (1 - wz) * col(i0, j0) + wz * col(i0, j1)
    hi = (1 - wz) * col(i0 + 1, j0) + wz * col(i0 + 1, j1)
    return (1 - wr) * lo + wr * hi


def interpolate(f: ScalarField, point: Sequence[float]) -> float:
    r, z = point
    return float(sample(f, r, z))


# ------------------------------------------------------------ integrals


def _axis_ball_weights(grid: Grid, R: float, z_c: float) -> np.ndarray:
    # exact volume of (cell ring) ∩ B_R: pi * int clip(R^2 - s^2, lo^2, hi^2) - lo^2 ds
    lo = (grid.r - 0.5 * grid.dr)[:, None]
    hi = (grid.r + 0.5 * grid.dr)[:, None]
    R2 = R * R
    s1 = np.sqrt(np.clip(R2 - hi ** 2, 0.0, None))
    s2 = np.sqrt(np.clip(R2 - lo ** 2, 0.0, None))

    def H(y):
        return (R2 - lo ** 2) * y - y ** 3 / 3.0

    def F(x):
        ax = np.abs(x)
        full = (hi ** 2 - lo ** 2) * np.minimum(ax, s1)
        part = np.where(ax > s1, H(np.minimum(ax, s2)) - H(s1), 0.0)
        return np.sign(x) * (full + part)

    mid = _periodic_dz(grid, grid.z, z_c)[None, :]
    half = 0.5 * grid.dz
    return math.pi * (F(mid + half) - F(mid - half))


def ball_weights(grid: Grid, R: float, center: tuple[float, float] | None = None) -> np.ndarray:
    """3-D measure carried by each cell inside the ball ``B_R(center)``.

    ``center = (r_c, z_c)`` lies in the meridional half-plane.  Axis-centred
    balls get the exact volume of each cell ring that falls inside the ball.
    Off the axis each ring, tested at its cell centre, contributes the arc
    that falls inside the ball.
    """
    r_c, z_c = (0.0, grid.z_mid) if center is None else center
    if r_c == 0.0:
        return _axis_ball_weights(grid, R, z_c)
    R_, Z_ = grid.mesh()
    dz = _periodic_dz(grid, Z_, z_c)
    base = R_ * grid.dr * grid.dz
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (R_ ** 2 + r_c ** 2 + dz ** 2 - R ** 2) / (2.0 * R_ * r_c)
    arc = 2.0 * np.arccos(np.clip(c, -1.0, 1.0))
    return arc * base


def check_ball(grid: Grid, R: float, center: tuple[float, float] | None = None) -> None:
    r_c = 0.0 if center is None else center[0]
    if not R > 0:
        raise ValueError("ball radius must be positive")
    if r_c + R > grid.r_max * (1 + 1e-12) or 2 * R > grid.z_len * (1 + 1e-12):
        raise ValueError(f"ball of radius {R} at r={r_c} leaves the domain")


def ball_integral(f, R: float, p: float = 1.0, center: tuple[float, float] | None = None) -> float:
    """``int_{B_R} |f|^p dx`` by midpoint quadrature in cylindrical measure."""
    if not p > 0:
        raise ValueError("exponent must be positive")
    grid = f.grid
    check_ball(grid, R, center)
    w = ball_weights(grid, R, center)
    return float(np.sum(w * np.abs(f.values) ** p))


def ball_volume(grid: Grid, R: float, center: tuple[float, float] | None = None) -> float:
    """Discrete volume of the ball, consistent with :func:`ball_integral`."""
    return float(ball_weights(grid, R, center).sum())
