"""Divergence-free radial-axial drifts ``b = b1 + b2 + b3``.

The discrete divergence and curl used here form a compatible pair: the
radial part of both is ``(1/r) d/dr (r u)`` with face values taken as the
average of the two neighbouring cells, and the axial part of both is the
centred difference ``(u[j+1] - u[j-1]) / (2 dz)``.  Since the two
one-dimensional operators act on different axes they commute, so
``divergence(curl(B)) == 0`` holds to roundoff for any stream function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import EVEN, ODD, Grid, ScalarField, VectorFieldCyl

#: stream-function profile used by :func:`make_b1_shell`, ``sin(pi s)^4`` on ``[0, 1]``
SHELL_POWER = 4


# ----------------------------------------------------------- stencils


def _face_values(u: np.ndarray, wall: str) -> np.ndarray:
    """Radial face values ``(nr + 1, nz)``; the axis face is irrelevant (zero radius)."""
    nr, nz = u.shape
    faces = np.zeros((nr + 1, nz))
    faces[1:nr] = 0.5 * (u[:-1] + u[1:])
    if wall == "extrapolate":
        faces[nr] = 1.5 * u[-1] - 0.5 * u[-2]
    elif wall != "closed":
        raise ValueError(f"unknown wall rule {wall!r}")
    return faces


def radial_flux_div(grid: Grid, u: np.ndarray, wall: str = "extrapolate") -> np.ndarray:
    """``(1/r) d(r u)/dr`` at cell centres from face averages."""
    flux = grid.r_faces[:, None] * _face_values(u, wall)
    return (flux[1:] - flux[:-1]) / (grid.r[:, None] * grid.dr)


def axial_centered(grid: Grid, u: np.ndarray) -> np.ndarray:
    return (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2.0 * grid.dz)


def divergence(b: VectorFieldCyl) -> ScalarField:
    """``d_r b^r + b^r / r + d_z b^z`` at cell centres (the swirl component plays no part)."""
    grid = b.grid
    div = radial_flux_div(grid, b.vr.values, b.wall) + axial_centered(grid, b.vz.values)
    return ScalarField(grid, div, EVEN)


def curl(B_theta: ScalarField) -> VectorFieldCyl:
    """Radial-axial field ``curl(B_theta e_theta)`` from its azimuthal stream component."""
    if B_theta.parity != ODD:
        raise ValueError("the azimuthal stream component must have odd parity")
    grid = B_theta.grid
    B = B_theta.values
    br = -axial_centered(grid, B)
    bz = radial_flux_div(grid, B, "extrapolate")
    return VectorFieldCyl.from_arrays(grid, br, np.zeros(grid.shape), bz)


def divergence_matrix(grid: Grid, wall: str = "closed") -> sp.csr_matrix:
    """Sparse form of :func:`divergence` acting on ``concat(vr.ravel(), vz.ravel())``."""
    nr, nz = grid.shape
    avg = sp.lil_matrix((nr + 1, nr))
    for i in range(1, nr):
        avg[i, i - 1] = 0.5
        avg[i, i] = 0.5
    if wall == "extrapolate":
        avg[nr, nr - 1] = 1.5
        avg[nr, nr - 2] = -0.5
    diff = sp.diags([-np.ones(nr), np.ones(nr)], [0, 1], shape=(nr, nr + 1))
    Dr1 = sp.diags(1.0 / (grid.r * grid.dr)) @ diff @ sp.diags(grid.r_faces) @ avg.tocsr()
    cz = sp.lil_matrix((nz, nz))
    for j in range(nz):
        cz[j, (j + 1) % nz] += 0.5 / grid.dz
        cz[j, (j - 1) % nz] -= 0.5 / grid.dz
    Dr = sp.kron(Dr1, sp.identity(nz))
    Dz = sp.kron(sp.identity(nr), cz.tocsr())
    return sp.hstack([Dr, Dz]).tocsr()


# ------------------------------------------------------ decomposition


@dataclass(frozen=True, eq=False)
class DriftDecomposition:
    """The three parts of a drift plus the stream function of ``b2``.

    Norm attribution follows the parts: hollowed energy on ``b1``, BMO on
    ``stream_B``, ``sup r|b|`` on ``b3``.
    """

    b1: VectorFieldCyl
    b2: VectorFieldCyl
    b3: VectorFieldCyl
    stream_B: ScalarField

    def __post_init__(self):
        grid = self.b1.grid
        for part in (self.b2, self.b3):
            if part.grid != grid:
                raise ValueError("drift parts live on different grids")
        if self.stream_B.grid != grid:
            raise ValueError("stream function lives on a different grid")
        for part in (self.b1, self.b2, self.b3):
            if np.any(part.vtheta.values != 0):
                raise ValueError("drift parts must be radial-axial (zero swirl component)")

    @property
    def grid(self) -> Grid:
        return self.b1.grid

    @property
    def total(self) -> VectorFieldCyl:
        return self.b1 + self.b2 + self.b3

    def parts(self) -> tuple[VectorFieldCyl, VectorFieldCyl, VectorFieldCyl]:
        return self.b1, self.b2, self.b3

    @classmethod
    def zero(cls, grid: Grid) -> "DriftDecomposition":
        z = VectorFieldCyl.zeros(grid)
        return cls(z, z, z, ScalarField.zeros(grid, ODD))


def make_b3_scaled(grid: Grid, c: float) -> VectorFieldCyl:
    """``b3 = (c / r) e_z``: divergence free and ``r |b3| = c`` at every cell."""
    if c < 0:
        raise ValueError("amplitude must be non-negative")
    bz = np.broadcast_to((c / grid.r)[:, None], grid.shape)
    zero = np.zeros(grid.shape)
    return VectorFieldCyl.from_arrays(grid, zero, zero, bz)


def make_b2_from_stream(B_theta: ScalarField) -> VectorFieldCyl:
    return curl(B_theta)


def shell_profile(rho, r_in: float, r_out: float):
    """Smooth bump on ``(r_in, r_out)`` and its derivative in ``rho``."""
    width = r_out - r_in
    s = np.clip((np.asarray(rho) - r_in) / width, 0.0, 1.0)
    sn = np.sin(math.pi * s)
    h = sn ** SHELL_POWER
    dh = SHELL_POWER * sn ** (SHELL_POWER - 1) * np.cos(math.pi * s) * math.pi / width
    inside = (rho > r_in) & (rho < r_out)
    return np.where(inside, h, 0.0), np.where(inside, dh, 0.0)


def shell_stream(grid: Grid, amplitude: float, r_in: float, r_out: float, z0: float | None = None) -> ScalarField:
    """``B_theta = A r h(|x|)`` with ``h`` supported in the shell ``r_in < |x| < r_out``."""
    z0 = grid.z_mid if z0 is None else z0
    R, Z = grid.mesh()
    rho = np.hypot(R, Z - z0)
    h, _ = shell_profile(rho, r_in, r_out)
    return ScalarField(grid, amplitude * R * h, ODD)


def shell_velocity(r, z, amplitude: float, r_in: float, r_out: float):
    """Continuum ``(b^r, b^z)`` of the shell field at meridional points (z measured from the centre)."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    rho = np.hypot(r, z)
    h, dh = shell_profile(rho, r_in, r_out)
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(rho > 0, 1.0 / rho, 0.0)
    br = -amplitude * r * dh * z * inv
    bz = amplitude * (2.0 * h + r * dh * r * inv)
    return br, bz


def make_b1_shell(grid: Grid, amplitude: float, r_in: float, r_out: float, z0: float | None = None) -> VectorFieldCyl:
    """Divergence-free field concentrated in the shell ``r_in < |x| < r_out``.

    Built as the discrete curl of :func:`shell_stream`, so the divergence
    vanishes to roundoff.
    """
    if not 0 < r_in < r_out <= grid.r_max:
        raise ValueError(f"invalid shell bounds ({r_in}, {r_out}) for r_max={grid.r_max}")
    return curl(shell_stream(grid, amplitude, r_in, r_out, z0))


def compose(b1: VectorFieldCyl | None, b2: VectorFieldCyl | None, b3: VectorFieldCyl | None,
            stream_B: ScalarField | None = None, grid: Grid | None = None) -> DriftDecomposition:
    """Record the three parts; missing parts are zero.

    If ``b2`` is given without its stream function, ``stream_B`` must be
    supplied for BMO attribution; a missing ``b2`` implies ``B = 0``.
    """
    given = [p for p in (b1, b2, b3) if p is not None]
    if grid is None:
        if not given:
            raise ValueError("need a grid or at least one part")
        grid = given[0].grid
    zero = VectorFieldCyl.zeros(grid)
    if b2 is not None and stream_B is None:
        raise ValueError("b2 needs its stream function")
    if stream_B is None:
        stream_B = ScalarField.zeros(grid, ODD)
    return DriftDecomposition(b1 or zero, b2 or zero, b3 or zero, stream_B)


# ------------------------------------------------------------ configs


@dataclass(frozen=True)
class DriftSpec:
    """Named constructor plus parameters, as read from a run configuration."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("shell", "stream", "scaled_inverse_r", "zero")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}; expected one of {self.KINDS}")


def stream_from_spec(grid: Grid, params: dict) -> ScalarField:
    """Azimuthal stream functions for ``kind = "stream"``.

    ``profile = "axial"`` gives ``B = A r`` (uniform axial flow ``2A``),
    ``"wave"`` gives ``B = A r sin(2 pi k z / L)`` and ``"gauss"`` a
    localised vortex ring ``B = A r exp(-|x - x0|^2 / s^2)``.
    """
    profile = params.get("profile", "wave")
    A = float(params.get("amplitude", 1.0))
    R, Z = grid.mesh()
    if profile == "axial":
        B = A * R
    elif profile == "wave":
        k = float(params.get("wavenumber", 1))
        B = A * R * np.sin(2 * math.pi * k * Z / grid.z_len)
    elif profile == "gauss":
        s = float(params.get("width", 0.1))
        z0 = float(params.get("z0", grid.z_mid))
        B = A * R * np.exp(-(R ** 2 + (Z - z0) ** 2) / s ** 2)
    else:
        raise ValueError(f"unknown stream profile {profile!r}")
    return ScalarField(grid, B, ODD)


def build_drift(grid: Grid, specs: dict[str, DriftSpec]) -> DriftDecomposition:
    """Assemble a decomposition from ``{"b1": spec, "b2": spec, "b3": spec}``."""
    b1 = b2 = b3 = None
    B = None
    for slot, spec in specs.items():
        p = spec.params
        if spec.kind == "zero":
            continue
        if slot == "b1":
            if spec.kind != "shell":
                raise ValueError("b1 must be a shell field")
            b1 = make_b1_shell(grid, float(p.get("amplitude", 1.0)), float(p["r_in"]), float(p["r_out"]),
                               p.get("z0"))
        elif slot == "b2":
            if spec.kind != "stream":
                raise ValueError("b2 must come from a stream function")
            B = stream_from_spec(grid, p)
            b2 = make_b2_from_stream(B)
        elif slot == "b3":
            if spec.kind != "scaled_inverse_r":
                raise ValueError("b3 must be of kind scaled_inverse_r")
            b3 = make_b3_scaled(grid, float(p.get("c", 1.0)))
        else:
            raise ValueError(f"unknown drift slot {slot!r}")
    return compose(b1, b2, b3, B, grid=grid)


def rescale_part(part: VectorFieldCyl, Q: float) -> VectorFieldCyl:
    """``b(x) -> Q b(Q x)`` realised on the grid shrunk by ``1/Q`` (nodes map to nodes)."""
    grid = part.grid.scaled(1.0 / Q)
    return VectorFieldCyl.from_arrays(grid, Q * part.vr.values, Q * part.vtheta.values, Q * part.vz.values,
                                      part.wall)
