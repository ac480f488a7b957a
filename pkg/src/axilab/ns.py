"""Explicit projection solver for axisymmetric Navier-Stokes with swirl (unit viscosity).

Collocated cell-centred unknowns.  Each step

1. advances the swirl in the form ``G = r v^theta`` with the monotone
   scheme of :mod:`axilab.gamma`, drift ``(v^r, v^z)``;
2. advances ``v^r`` and ``v^z`` explicitly with upwind advection, the
   centrifugal term ``G^2 / r^3`` and the viscous terms ``(Lap - 1/r^2) v^r``
   and ``Lap v^z``;
3. removes the gradient part of ``(v^r, v^z)``: the result is the closest
   field, in the volume-weighted norm, whose discrete divergence
   (:func:`axilab.drift.divergence_matrix` with a closed wall) vanishes.
   The constrained least-squares problem is solved with a cached sparse
   factorisation, so the divergence is zero to roundoff.

The outer wall is no-slip; it may rotate, giving ``v^theta = omega r_max`` there.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .drift import divergence, divergence_matrix
from .gamma import (CFLViolation, SolverDiverged, apply_operator, diagonal_rate, upwind_transport)
from .grid import EVEN, ODD, Grid, ScalarField, Trajectory, VectorFieldCyl

log = logging.getLogger(__name__)


class PoissonNotConverged(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"Poisson solve stopped after {iterations} iterations, relative residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class PoissonSolveConfig:
    rtol: float = 1e-10
    maxiter: int = 5000

    def __post_init__(self):
        if not 0 < self.rtol < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


@dataclass(frozen=True, eq=False)
class NSState:
    """Velocity (closed-wall divergence rule), pressure and time.

    ``wall_omega`` is the angular velocity of the outer wall.
    """

    velocity: VectorFieldCyl
    pressure: ScalarField
    time: float = 0.0
    wall_omega: float = 0.0

    def __post_init__(self):
        if self.pressure.parity != EVEN:
            raise ValueError("pressure must have even parity")
        if self.velocity.wall != "closed":
            object.__setattr__(self, "velocity", replace(self.velocity, wall="closed"))

    @property
    def grid(self) -> Grid:
        return self.velocity.grid

    @classmethod
    def from_arrays(cls, grid: Grid, vr, vtheta, vz, time: float = 0.0, wall_omega: float = 0.0,
                    pressure=None) -> "NSState":
        v = VectorFieldCyl.from_arrays(grid, vr, vtheta, vz, wall="closed")
        p = ScalarField(grid, np.zeros(grid.shape) if pressure is None else pressure, EVEN)
        return cls(v, p, time, wall_omega)


# ------------------------------------------------------------ derived


def compute_gamma(state: NSState) -> ScalarField:
    grid = state.grid
    return ScalarField(grid, grid.r[:, None] * state.velocity.vtheta.values, EVEN)


def compute_b(state: NSState) -> VectorFieldCyl:
    v = state.velocity
    return VectorFieldCyl.from_arrays(state.grid, v.vr.values, np.zeros(state.grid.shape), v.vz.values, "closed")


@lru_cache(maxsize=8)
def _curl_normal_factor(grid: Grid):
    n = grid.nr * grid.nz
    # radial part of b from -d_z B, axial part from (1/r) d_r (r B) with extrapolated wall
    D = divergence_matrix(grid, "extrapolate")
    Dr = D[:, :n]
    Dz = D[:, n:]
    C = sp.vstack([-Dz, Dr]).tocsc()
    w = np.concatenate([np.repeat(grid.r, grid.nz)] * 2)
    normal = (C.T @ sp.diags(w) @ C).tocsc()
    return C, w, spla.splu(normal)


def compute_stream(state_or_b) -> ScalarField:
    """Azimuthal stream function ``B`` with ``curl(B e_theta)`` closest to ``b``.

    The discrete curl is injective on odd cell fields, so the weighted
    least-squares problem has a unique solution; for a discretely
    divergence-free ``b`` built as a curl, it is recovered exactly.
    """
    b = compute_b(state_or_b) if isinstance(state_or_b, NSState) else state_or_b
    grid = b.grid
    C, w, lu = _curl_normal_factor(grid)
    rhs = C.T @ (w * np.concatenate([b.vr.values.ravel(), b.vz.values.ravel()]))
    B = lu.solve(rhs).reshape(grid.shape)
    return ScalarField(grid, B, ODD)


# --------------------------------------------------------- projection


@dataclass(frozen=True)
class _Projector:
    D: sp.csr_matrix
    Minv: np.ndarray
    keep: np.ndarray
    lu: object
    kernel: np.ndarray


@lru_cache(maxsize=8)
def projector(grid: Grid) -> _Projector:
    nr, nz = grid.shape
    n = nr * nz
    D = divergence_matrix(grid, "closed")
    rw = np.repeat(grid.r, nz)
    Minv = 1.0 / np.concatenate([rw, rw])
    S = (D @ sp.diags(Minv) @ D.T).tocsr()
    # null space of D^T: r (alpha + beta (-1)^j); pin cells (0, 0) and (0, 1)
    pins = [0, 1] if nz % 2 == 0 else [0]
    keep = np.setdiff1d(np.arange(n), pins)
    lu = spla.splu(S[keep][:, keep].tocsc())
    sgn = (-1.0) ** np.tile(np.arange(nz), nr)
    kernel = [rw / np.linalg.norm(rw)]
    if nz % 2 == 0:
        kernel.append(rw * sgn / np.linalg.norm(rw))
    return _Projector(D, Minv, keep, lu, np.array(kernel))


def project(grid: Grid, vr: np.ndarray, vz: np.ndarray, dt: float = 1.0):
    """Volume-weighted orthogonal projection onto closed-wall divergence-free fields.

    Returns ``(vr, vz, p)`` with ``p`` the pressure whose discrete gradient
    times ``dt`` was removed, gauge-fixed to zero volume mean.
    """
    P = projector(grid)
    u = np.concatenate([vr.ravel(), vz.ravel()])
    rhs = P.D @ u
    lam = np.zeros(grid.nr * grid.nz)
    lam[P.keep] = P.lu.solve(rhs[P.keep])
    u = u - P.Minv * (P.D.T @ lam)
    n = grid.nr * grid.nz
    rw = np.repeat(grid.r, grid.nz)
    p = -lam / (dt * rw)
    if grid.nz % 2 == 0:
        # the z-checkerboard is invisible to the discrete gradient; drop it
        sgn = (-1.0) ** np.tile(np.arange(grid.nz), grid.nr)
        p -= sgn * np.sum(rw * p * sgn) / rw.sum()
    p -= np.sum(rw * p) / rw.sum()
    return u[:n].reshape(grid.shape), u[n:].reshape(grid.shape), p.reshape(grid.shape)


# ---------------------------------------------------- pressure Poisson


@lru_cache(maxsize=8)
def _poisson_matrix(grid: Grid) -> sp.csr_matrix:
    """Symmetric negative semidefinite ``r * Lap`` with Neumann wall, parity axis, periodic z."""
    nr, nz = grid.shape
    h, k = grid.dr, grid.dz
    rf = grid.r_faces
    main = np.zeros(nr)
    off = rf[1:nr] / h ** 2
    main[:-1] -= off
    main[1:] -= off
    Lr = sp.diags([off, main, off], [-1, 0, 1])
    cz = sp.diags([np.ones(nz - 1), -2 * np.ones(nz), np.ones(nz - 1)], [-1, 0, 1]).tolil()
    cz[0, nz - 1] = 1.0
    cz[nz - 1, 0] = 1.0
    Lz = sp.kron(sp.diags(grid.r), cz.tocsr() / k ** 2)
    return (sp.kron(Lr, sp.identity(nz)) + Lz).tocsr()


def poisson_apply(p: np.ndarray, grid: Grid, wall_flux=None) -> np.ndarray:
    """Discrete ``(p_rr + p_r/r + p_zz)`` consistent with :func:`pressure_poisson`."""
    A = _poisson_matrix(grid)
    out = (A @ p.ravel()).reshape(grid.shape) / grid.r[:, None]
    if wall_flux is not None:
        out[-1] += grid.r_max * np.broadcast_to(wall_flux, (grid.nz,)) / (grid.r[-1] * grid.dr)
    return out


def pressure_poisson(rhs: ScalarField, cfg: PoissonSolveConfig = PoissonSolveConfig(), wall_flux=None,
                     return_info: bool = False):
    """Solve ``(d_rr + (1/r) d_r + d_zz) p = rhs`` by conjugate gradients.

    Neumann data ``dp/dr = wall_flux`` at ``r = r_max`` (default 0), even
    parity at the axis, periodic in z.  The compatibility defect of the data
    is subtracted first; the solution has zero volume mean.
    """
    grid = rhs.grid
    A = _poisson_matrix(grid)
    r = grid.r[:, None]
    b = (r * rhs.values).copy()
    if wall_flux is not None:
        b[-1] -= grid.r_max * np.broadcast_to(np.asarray(wall_flux, dtype=float), (grid.nz,)) / grid.dr
    # compatibility: sum of b must vanish (constants span the null space of A)
    defect = b.sum()
    b -= defect * r / r.sum() / grid.nz
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        p = np.zeros(grid.shape)
        return (ScalarField(grid, p), 0) if return_info else ScalarField(grid, p)
    it = [0]

    def count(_):
        it[0] += 1

    # CG on the positive semidefinite -A
    x, info = spla.cg(-A, -b.ravel(), rtol=cfg.rtol, maxiter=cfg.maxiter, callback=count)
    res = np.linalg.norm(A @ x - b.ravel()) / bnorm
    if info != 0 and res > cfg.rtol:
        raise PoissonNotConverged(res, it[0])
    p = x.reshape(grid.shape)
    w = grid.cell_volumes()
    p -= np.sum(w * p) / w.sum()
    out = ScalarField(grid, p, EVEN)
    return (out, it[0]) if return_info else out


# ------------------------------------------------------------- stepping


def _viscous_radial(grid: Grid, u: np.ndarray, wall: float | np.ndarray, odd: bool) -> np.ndarray:
    """``(1/r) d_r (r d_r u)`` with no flux through the axis face and Dirichlet wall value."""
    h = grid.dr
    rf = grid.r_faces
    flux = np.zeros((grid.nr + 1, grid.nz))
    flux[1:-1] = rf[1:-1, None] * (u[1:] - u[:-1]) / h
    flux[-1] = grid.r_max * (wall - u[-1]) / (0.5 * h)
    out = (flux[1:] - flux[:-1]) / (grid.r[:, None] * h)
    if odd:
        # the axis face carries r_f = 0, so odd fields lose only through -u/r^2
        out -= u / grid.r[:, None] ** 2
    return out


def _zz(grid: Grid, u: np.ndarray) -> np.ndarray:
    return (np.roll(u, -1, axis=1) - 2.0 * u + np.roll(u, 1, axis=1)) / grid.dz ** 2


def velocity_rate(grid: Grid, vr: np.ndarray, vz: np.ndarray) -> np.ndarray:
    """Per-cell explicit loss rate for the velocity components (advection + viscosity)."""
    h = grid.dr
    rf = grid.r_faces
    visc = (rf[1:] + rf[:-1]) / (grid.r * h * h) + 1.0 / grid.r ** 2
    visc[-1] = (rf[-2] / h + 2.0 * grid.r_max / h) / (grid.r[-1] * h) + 1.0 / grid.r[-1] ** 2
    rate = visc[:, None] + 2.0 / grid.dz ** 2
    adv = np.abs(vr) / h
    adv[-1] = np.where(vr[-1] < 0, 2.0 * np.abs(vr[-1]) / h, adv[-1])
    return rate + adv + np.abs(vz) / grid.dz


def max_stable_dt(state: NSState) -> float:
    grid = state.grid
    vr, vz = state.velocity.vr.values, state.velocity.vz.values
    r1 = velocity_rate(grid, vr, vz).max()
    r2 = diagonal_rate(grid, vr, vz).max()
    return float(1.0 / max(r1, r2))


def step_ns(state: NSState, dt: float) -> NSState:
    grid = state.grid
    v = state.velocity
    vr, vth, vz = v.vr.values, v.vtheta.values, v.vz.values
    limit = max_stable_dt(state)
    if dt > limit * (1 + 1e-12):
        rate = np.maximum(velocity_rate(grid, vr, vz), diagonal_rate(grid, vr, vz))
        i, j = np.unravel_index(np.argmax(rate), rate.shape)
        raise CFLViolation(f"dt={dt:.3e} exceeds the stable limit {limit:.3e} at cell (i={i}, j={j})")
    r = grid.r[:, None]
    zeros_wall = np.zeros(grid.nz)
    # swirl in conserved form
    G = r * vth
    G_wall = np.full(grid.nz, state.wall_omega * grid.r_max ** 2)
    G_new = G + dt * (apply_operator(grid, G, G_wall) - upwind_transport(grid, G, G_wall, vr, vz))
    # meridional components
    adv_r = upwind_transport(grid, vr, zeros_wall, vr, vz)
    adv_z = upwind_transport(grid, vz, zeros_wall, vr, vz)
    # upwind_transport mirrors evenly at the axis; v^r is odd, fix its backward difference there
    first = vr[0] > 0
    adv_r[0] += np.where(first, vr[0] * (2.0 * vr[0]) / grid.dr, 0.0)
    vr_star = vr + dt * (-adv_r + G ** 2 / r ** 3 + _viscous_radial(grid, vr, 0.0, True) + _zz(grid, vr))
    vz_star = vz + dt * (-adv_z + _viscous_radial(grid, vz, 0.0, False) + _zz(grid, vz))
    vr_new, vz_new, p = project(grid, vr_star, vz_star, dt)
    out = np.stack([vr_new, G_new / r, vz_new])
    if not np.all(np.isfinite(out)):
        raise SolverDiverged(f"non-finite velocity at t={state.time + dt:.6g}")
    vel = VectorFieldCyl.from_arrays(grid, vr_new, G_new / r, vz_new, "closed")
    return NSState(vel, ScalarField(grid, p, EVEN), state.time + dt, state.wall_omega)


def kinetic_energy(state: NSState) -> float:
    w = state.grid.cell_volumes()
    return 0.5 * float(np.sum(w * state.velocity.magnitude() ** 2))


def divergence_residual(state: NSState) -> float:
    return float(np.abs(divergence(compute_b(state)).values).max())


@dataclass(frozen=True)
class NSRunConfig:
    t_end: float
    snapshot_every: float
    dt: float | None = None
    cfl: float = 0.8

    def __post_init__(self):
        if not (self.t_end > 0 and self.snapshot_every > 0):
            raise ValueError("t_end and snapshot_every must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        n = self.t_end / self.snapshot_every
        if abs(n - round(n)) > 1e-9 * max(n, 1):
            raise ValueError("t_end must be a whole number of snapshot intervals")


def run_ns(initial: NSState, cfg: NSRunConfig, log_rows: list | None = None) -> tuple[Trajectory, list]:
    """Advance and return ``(velocity trajectory, pressures at the snapshots)``.

    ``dt`` is recomputed from the stable limit at each snapshot interval and
    shrunk so that an integer number of steps fits.  Per-step rows
    ``(t, energy, max|v|, max|G|, divergence, solver_iterations)`` are
    appended to ``log_rows``; the factorised projection reports 1 iteration.
    """
    state = initial
    n_snap = int(round(cfg.t_end / cfg.snapshot_every))
    times = [state.time]
    snaps = [state.velocity]
    pressures = [state.pressure]
    t0 = initial.time

    def record(s):
        if log_rows is not None:
            log_rows.append((s.time, kinetic_energy(s), float(s.velocity.magnitude().max()),
                             float(np.abs(compute_gamma(s).values).max()), divergence_residual(s), 1))

    record(state)
    for s in range(n_snap):
        dt0 = cfg.dt if cfg.dt is not None else cfg.cfl * max_stable_dt(state)
        n_sub = max(1, math.ceil(cfg.snapshot_every / dt0 - 1e-9))
        dt = cfg.snapshot_every / n_sub
        for _ in range(n_sub):
            state = step_ns(state, dt)
            record(state)
        t_snap = t0 + (s + 1) * cfg.snapshot_every
        state = replace(state, time=t_snap)
        times.append(t_snap)
        snaps.append(state.velocity)
        pressures.append(state.pressure)
    log.debug("run_ns: %d snapshots", n_snap)
    return Trajectory(np.array(times), tuple(snaps)), pressures

