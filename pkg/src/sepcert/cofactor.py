"""Cofactor systems: Newton equations ``x'' = -cof(G)^{-1} grad k``.

Given the force and a candidate tensor ``G``, the covector
``w = -cof(G) M`` must be closed; ``k`` is then its potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import NotClosedError, SingularError
from .fields import ScalarField, SymmetricTensorField, fd_gradient
from .flow import NewtonSystem, conservation_report, integrate_newton

CLOSEDNESS_TOL = 1e-6
PATH_AGREEMENT_TOL = 1e-8
SINGULAR_TOL = 1e-12
GRID_SIZE = 21
DEFAULT_REGION = ((-1.0, 1.0), (0.1, 2.0))

_x1, _x2 = sp.symbols("x1 x2")


def cofactor_matrix(J: SymmetricTensorField, at) -> np.ndarray:
    """``det(J) J^{-1}``; raises :class:`SingularError` when ``J`` is singular."""
    m = J(at)
    det = np.linalg.det(m)
    if abs(det) < SINGULAR_TOL * max(1.0, np.abs(m).max()) ** m.shape[0]:
        raise SingularError(f"singular tensor at {at}: det = {det:.3e}")
    if m.shape == (2, 2):
        return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
    return det * np.linalg.inv(m)


def example_system() -> NewtonSystem:
    """``x1'' = -4 x1``, ``x2'' = 6 x1^2 - 4 x2``."""
    return NewtonSystem(2, lambda x: np.array([-4.0 * x[0], 6.0 * x[0] ** 2 - 4.0 * x[1]]), triangular=True)


def example_tensor() -> SymmetricTensorField:
    """The tensor ``[[1, -x1], [-x1, -2 x2]]`` making :func:`example_system` cofactor."""
    return SymmetricTensorField.from_expr([[1, -_x1], [-_x1, -2 * _x2]], [_x1, _x2])


def example_k_reference(x) -> float:
    """Closed-form potential of the example, up to a constant."""
    x1, x2 = x
    return -(1.5 * x1 ** 4 + 2.0 * x1 ** 2 * x2 - 2.0 * x2 ** 2)


@dataclass
class CofactorResult:
    passed: bool
    closedness_residual: float
    path_disagreement: float
    grid: np.ndarray
    residual_map: np.ndarray
    k: ScalarField | None = None
    k_samples: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _covector(system: NewtonSystem, G: SymmetricTensorField):
    return lambda x: -cofactor_matrix(G, x) @ system(x)


def _line_integral(w, a, b, nodes: int = 64) -> float:
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    seg = np.asarray(b, float) - np.asarray(a, float)
    return 0.5 * sum(wt * float(w(a + 0.5 * (s + 1.0) * seg) @ seg) for s, wt in zip(xs, ws))


def _l_path(w, base, x, first_axis: int) -> float:
    corner = np.array(base, dtype=float)
    corner[first_axis] = x[first_axis]
    return _line_integral(w, base, corner) + _line_integral(w, corner, np.asarray(x, float))


def check_cofactor(system: NewtonSystem, G: SymmetricTensorField, region=DEFAULT_REGION,
                   n_grid: int = GRID_SIZE, base=None) -> CofactorResult:
    """Closedness of ``w = -cof(G) M`` on a grid over a 2D rectangle, and ``k``.

    ``k`` is normalised to vanish at ``base`` (default: region centre).
    Closedness is measured relative to the size of ``dw``.
    """
    if system.dim != 2 or G.dim != 2:
        raise ValueError("grid certification is implemented for planar systems")
    (a0, a1), (b0, b1) = region
    xs, ys = np.linspace(a0, a1, n_grid), np.linspace(b0, b1, n_grid)
    grid = np.array([[x, y] for y in ys for x in xs])
    for x in grid:
        cofactor_matrix(G, x)  # raises on singular G
    w = _covector(system, G)
    residual_map = np.empty(len(grid))
    for idx, x in enumerate(grid):
        dw = fd_gradient(w, x)  # dw[i, j] = d_i w_j
        residual_map[idx] = abs(dw[0, 1] - dw[1, 0]) / max(1.0, np.abs(dw).max())
    worst = float(residual_map.max())
    base = np.array([(a0 + a1) / 2, (b0 + b1) / 2]) if base is None else np.asarray(base, float)
    if worst > CLOSEDNESS_TOL:
        return CofactorResult(False, worst, np.nan, grid, residual_map)

    def k_value(x):
        return _l_path(w, base, np.asarray(x, float), 0)

    probes = grid[:: max(1, len(grid) // 25)]
    disagreement = max(abs(_l_path(w, base, x, 0) - _l_path(w, base, x, 1)) for x in probes)
    k = ScalarField(k_value, w)
    samples = np.array([k_value(x) for x in grid])
    return CofactorResult(bool(disagreement < PATH_AGREEMENT_TOL), worst, float(disagreement),
                          grid, residual_map, k, samples)


def recover_k(system: NewtonSystem, G: SymmetricTensorField, region=DEFAULT_REGION, **kw) -> ScalarField:
    """Like :func:`check_cofactor` but raises :class:`NotClosedError` on failure."""
    res = check_cofactor(system, G, region, **kw)
    if not res.passed:
        raise NotClosedError(f"-cof(G) M is not closed (residual {res.closedness_residual:.3e})")
    return res.k


def separable_coords(x) -> np.ndarray:
    """``u1 = x1``, ``u2 = x1^2 / 2 + x2``."""
    x = np.asarray(x, dtype=float)
    return np.array([x[0], 0.5 * x[0] ** 2 + x[1]])


def second_derivative(f: np.ndarray, dt: float) -> np.ndarray:
    """Sixth-order central second difference on interior points (3 dropped per side)."""
    c = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
    return np.convolve(f, c[::-1], mode="valid") / dt ** 2


@dataclass
class FlowCheck:
    u1_residual: float
    u2_residual: float
    energy_drift: float
    times: np.ndarray
    u: np.ndarray


def tne_example_coords(x0=(1.0, 0.0), v0=(0.0, 0.0), t_end: float = 10.0, dt: float = 0.02,
                       rel_tol: float = 1e-12) -> FlowCheck:
    """Integrate the triangular example and check the separable-coordinate dynamics.

    Residuals are of ``u1'' + 4 u1`` and ``u2'' - (u1'^2 + 4 u1^2 - 4 u2)``,
    with accelerations from finite differences of the sampled trajectory.
    ``energy_drift`` is the relative drift of ``u1'^2 / 2 + 2 u1^2``.
    """
    sys_ = example_system()
    t_eval = np.arange(0.0, t_end + 0.5 * dt, dt)
    traj = integrate_newton(sys_, x0, v0, t_end, rel_tol, t_eval=t_eval)
    x, v = traj.q, traj.p
    u = np.array([separable_coords(xi) for xi in x])
    u1dot = v[:, 0]
    u1dd = second_derivative(u[:, 0], dt)
    u2dd = second_derivative(u[:, 1], dt)
    mid = slice(3, -3)
    r1 = np.max(np.abs(u1dd + 4.0 * u[mid, 0]), initial=0.0)
    r2 = np.max(np.abs(u2dd - (u1dot[mid] ** 2 + 4.0 * u[mid, 0] ** 2 - 4.0 * u[mid, 1])), initial=0.0)
    e1 = lambda q, p: 0.5 * p[0] ** 2 + 2.0 * q[0] ** 2
    drift = conservation_report(traj, [e1])[0]
    return FlowCheck(float(r1), float(r2), drift, traj.times, u)
