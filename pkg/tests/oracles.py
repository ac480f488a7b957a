"""Independent reference solutions shared by the test modules."""
import math

import numpy as np
import sympy

from axilab.gamma import GammaRunConfig, GammaState, run_gamma
from axilab.grid import ScalarField, make_grid

_r, _z, _t = sympy.symbols("r z t", real=True)
#: smooth manufactured target, vanishing like r^2 at the axis
GAMMA_STAR = _r ** 2 * sympy.exp(-_r ** 2) * (1 + sympy.sin(2 * sympy.pi * _z) / 2) * sympy.exp(-_t)
_source = sympy.simplify(sympy.diff(GAMMA_STAR, _t)
                         - (sympy.diff(GAMMA_STAR, _r, 2) - sympy.diff(GAMMA_STAR, _r) / _r
                            + sympy.diff(GAMMA_STAR, _z, 2)))
gamma_star = sympy.lambdify((_r, _z, _t), GAMMA_STAR, "numpy")
gamma_source = sympy.lambdify((_r, _z, _t), _source, "numpy")


def mms_error(n: int, t_end: float = 0.02) -> float:
    """Sup error against the manufactured solution on an ``n x n`` grid of ``[0, 1] x [0, 1)``."""
    g = make_grid(n, n, 1.0, 1.0)
    R, Z = g.mesh()
    G0 = ScalarField(g, gamma_star(R, Z, 0.0))
    state = GammaState(G0, 0.0, None, lambda z, t: gamma_star(1.0, z, t))
    cfg = GammaRunConfig(t_end, t_end, forcing=lambda t: gamma_source(R, Z, t))
    traj = run_gamma(state, cfg)
    return float(np.abs(traj.snapshots[-1].values - gamma_star(R, Z, t_end)).max())


def r2_cylinder_mean_value_ratio(p: int = 3) -> float:
    """``sup_{B_1/2} r^2 / (int_{B_1} r^{2p})^{1/p}`` by 2-D quadrature (time factors cancel)."""
    from scipy import integrate
    # int over the unit ball of r^{2p}: 2 pi int_0^1 int_{-sqrt(1-r^2)}^{sqrt(1-r^2)} r^{2p} r dz dr
    val = integrate.dblquad(lambda zz, rr: 2 * math.pi * rr ** (2 * p + 1), 0.0, 1.0,
                            lambda rr: -math.sqrt(1 - rr * rr), lambda rr: math.sqrt(1 - rr * rr))[0]
    return 0.25 / val ** (1.0 / p)


def r2_cylinder_lp_norm(p: float, radius: float) -> float:
    """``(int_{P(radius)} r^{2p})^{1/p}`` for steady ``r^2`` by 2-D quadrature; the time factor is ``radius^2``."""
    from scipy import integrate
    val = integrate.dblquad(lambda zz, rr: 2 * math.pi * rr ** (2 * p + 1), 0.0, radius,
                            lambda rr: -math.sqrt(max(radius * radius - rr * rr, 0.0)),
                            lambda rr: math.sqrt(max(radius * radius - rr * rr, 0.0)),
                            epsabs=0, epsrel=1e-12)[0]
    return (val * radius ** 2) ** (1.0 / p)
