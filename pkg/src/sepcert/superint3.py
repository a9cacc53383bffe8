"""Three bodies on a line with potentials of the form ``V = F(psi) / r^2``.

Positions ``x = (x1, x2, x3)`` map to cylindrical coordinates ``(r, psi, z)``
through an orthogonal change of frame, after which every admissible
potential separates in several coordinate systems and carries five
quadratic integrals, four of them functionally independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp

from .charts import cylindrical
from .errors import DomainError
from .fields import ScalarField
from .flow import Trajectory, conservation_report, integrate_hamiltonian
from .observables import MomentumPolynomial

COLLISION_MARGIN = 1e-8
RANK_TOL = 1e-8

# rows: r cos psi, r sin psi, z as linear forms in the positions
FRAME = np.array([
    [1 / np.sqrt(2), -1 / np.sqrt(2), 0.0],
    [1 / np.sqrt(6), 1 / np.sqrt(6), -2 / np.sqrt(6)],
    [1 / np.sqrt(3), 1 / np.sqrt(3), 1 / np.sqrt(3)],
])

CHART = cylindrical()
_xs = sp.symbols("x1 x2 x3")


def jacobi_map(x) -> np.ndarray:
    """Line positions to ``(r, psi, z)`` with ``psi = atan2(r sin psi, r cos psi)``."""
    X, Y, Z = FRAME @ np.asarray(x, dtype=float)
    r = np.hypot(X, Y)
    if r < COLLISION_MARGIN:
        raise DomainError("total collision ray: r = 0")
    return np.array([r, np.arctan2(Y, X), Z])


def jacobi_inverse(cyl) -> np.ndarray:
    r, psi, z = cyl
    return FRAME.T @ np.array([r * np.cos(psi), r * np.sin(psi), z])


def phase_from_line(x, xdot) -> tuple[np.ndarray, np.ndarray]:
    """Cylindrical phase point of unit-mass bodies at positions ``x``, velocities ``xdot``."""
    q = jacobi_map(x)
    jac = CHART.jacobian(q)  # d(X, Y, Z) / d(r, psi, z)
    p = jac.T @ (FRAME @ np.asarray(xdot, dtype=float))
    return q, p


def differences(x) -> np.ndarray:
    """``X_i = x^i - x^{i+1}`` (indices mod 3)."""
    x = np.asarray(x, dtype=float)
    return x - np.roll(x, -1)


@dataclass(frozen=True, eq=False)
class ThreeBodyPotential:
    """Potential on the line together with its angular profile ``F``."""

    name: str
    k: tuple
    V: ScalarField
    singular: object  # x -> smallest denominator magnitude

    def __call__(self, x) -> float:
        if self.singular(x) < COLLISION_MARGIN:
            raise DomainError(f"{self.name} potential evaluated on its singular set at {x}")
        return self.V(x)

    @property
    def F(self) -> ScalarField:
        """``F(psi) = r^2 V`` on the unit circle ``r = 1, z = 0``."""
        def value(psi):
            return self(self._ray(psi))

        def grad(psi):
            x = self._ray(psi)
            tangent = FRAME.T @ np.array([-np.sin(psi[0]), np.cos(psi[0]), 0.0])
            return np.array([self.V.grad(x) @ tangent])

        return ScalarField(lambda s: value(np.atleast_1d(s)), lambda s: grad(np.atleast_1d(s)))

    @staticmethod
    def _ray(psi) -> np.ndarray:
        return jacobi_inverse([1.0, float(np.asarray(psi).ravel()[0]), 0.0])

    def form_defect(self, x, scale: float = 1.7) -> float:
        """Relative change of ``r^2 V`` between two radii on the ray through ``x``."""
        r, psi, z = jacobi_map(x)
        a = r ** 2 * self(jacobi_inverse([r, psi, z]))
        b = (scale * r) ** 2 * self(jacobi_inverse([scale * r, psi, z + 0.3]))
        return abs(a - b) / max(abs(a), 1e-300)


def _from_terms(name, k, terms):
    expr = sum(ki * t for ki, t in zip(k, terms))
    denoms = [sp.lambdify([_xs], sp.denom(sp.together(t)), "numpy") for t in terms]
    singular = lambda x: min(abs(float(d(np.asarray(x, float)))) for d in denoms)
    return ThreeBodyPotential(name, tuple(float(c) for c in k), ScalarField.from_expr(expr, _xs), singular)


def potential_calogero(k: Sequence[float]) -> ThreeBodyPotential:
    x1, x2, x3 = _xs
    return _from_terms("calogero", k, [1 / (x1 - x2) ** 2, 1 / (x2 - x3) ** 2, 1 / (x3 - x1) ** 2])


def potential_wolfes(k: Sequence[float]) -> ThreeBodyPotential:
    x1, x2, x3 = _xs
    return _from_terms("wolfes", k, [1 / (x1 + x3 - 2 * x2) ** 2, 1 / (x2 + x1 - 2 * x3) ** 2,
                                     1 / (x3 + x2 - 2 * x1) ** 2])


def potential_new(k: Sequence[float]) -> ThreeBodyPotential:
    """``sum_i k_i / (X_i^2 + X_{i+1}^2)``."""
    x1, x2, x3 = _xs
    X = [x1 - x2, x2 - x3, x3 - x1]
    return _from_terms("new", k, [1 / (X[i] ** 2 + X[(i + 1) % 3] ** 2) for i in range(3)])


def potential_general(F_funcs, name: str = "general") -> ThreeBodyPotential:
    """``sum_i F_i(X_{i+1}/X_i, X_{i+2}/X_i) / X_i^2`` for user callables ``F_i(a, b)``.

    Gradients are finite differences; ``F_i`` must be smooth away from ``X_i = 0``.
    """
    def value(x):
        X = differences(x)
        return sum(F(X[(i + 1) % 3] / X[i], X[(i + 2) % 3] / X[i]) / X[i] ** 2 for i, F in enumerate(F_funcs))

    return ThreeBodyPotential(name, (), ScalarField(value), lambda x: float(np.min(np.abs(differences(x)))))


POTENTIALS = {"calogero": potential_calogero, "wolfes": potential_wolfes, "new": potential_new}


def integrals(P: ThreeBodyPotential) -> list[MomentumPolynomial]:
    """``H, H_1, H_2, H_3, H_4`` in the cylindrical chart ``(r, psi, z)``."""
    F = P.F

    def Fpsi(fn, grad):
        # coefficient depending on (r, psi, z) through explicit factors and F(psi)
        return ScalarField(fn, grad)

    def f_over_r2():
        return Fpsi(lambda q: F(q[1:2]) / q[0] ** 2,
                    lambda q: np.array([-2 * F(q[1:2]) / q[0] ** 3, F.grad(q[1:2])[0] / q[0] ** 2, 0.0]))

    def inv_r2():
        return ScalarField(lambda q: 1 / q[0] ** 2, lambda q: np.array([-2 / q[0] ** 3, 0.0, 0.0]))

    def r_coef(c):
        return ScalarField(lambda q: c * q[0], lambda q: np.array([c, 0.0, 0.0]))

    def z_coef(c):
        return ScalarField(lambda q: c * q[2], lambda q: np.array([0.0, 0.0, c]))

    def one_plus_z2_r2(c):
        return ScalarField(lambda q: c * (1 + q[2] ** 2 / q[0] ** 2),
                           lambda q: c * np.array([-2 * q[2] ** 2 / q[0] ** 3, 0.0, 2 * q[2] / q[0] ** 2]))

    Fq = Fpsi(lambda q: F(q[1:2]), lambda q: np.array([0.0, F.grad(q[1:2])[0], 0.0]))
    fr2 = f_over_r2()

    H = MomentumPolynomial(3, {(2, 0, 0): 0.5, (0, 2, 0): inv_r2() * 0.5, (0, 0, 2): 0.5, (0, 0, 0): fr2})
    H1 = MomentumPolynomial(3, {(0, 2, 0): 0.5, (0, 0, 0): Fq})
    H2 = MomentumPolynomial(3, {(0, 0, 2): 0.5})
    # 1/2 (r p_z - z p_r)^2 = 1/2 r^2 p_z^2 - r z p_r p_z + 1/2 z^2 p_r^2
    H3 = MomentumPolynomial(3, {
        (0, 0, 2): ScalarField(lambda q: 0.5 * q[0] ** 2, lambda q: np.array([q[0], 0.0, 0.0])),
        (1, 0, 1): ScalarField(lambda q: -q[0] * q[2], lambda q: np.array([-q[2], 0.0, -q[0]])),
        (2, 0, 0): ScalarField(lambda q: 0.5 * q[2] ** 2, lambda q: np.array([0.0, 0.0, q[2]])),
        (0, 2, 0): one_plus_z2_r2(0.5),
        (0, 0, 0): one_plus_z2_r2(1.0) * Fq,
    })
    z_over_r2 = ScalarField(lambda q: q[2] / q[0] ** 2, lambda q: np.array([-2 * q[2] / q[0] ** 3, 0.0, 1 / q[0] ** 2]))
    H4 = MomentumPolynomial(3, {
        (2, 0, 0): z_coef(0.5),
        (0, 2, 0): z_over_r2 * 0.5,
        (1, 0, 1): r_coef(-0.5),
        (0, 0, 0): z_over_r2 * Fq,
    })
    return [H, H1, H2, H3, H4]


def phase_gradient_matrix(observables: Sequence[MomentumPolynomial], q, p) -> np.ndarray:
    rows = []
    for F in observables:
        gq, gp = F.gradients(q, p)
        rows.append(np.concatenate([gq, gp]))
    return np.array(rows)


def independence_rank(observables: Sequence[MomentumPolynomial], q, p, tol: float = RANK_TOL) -> int:
    """Numerical rank of the stacked phase-space gradients at ``(q, p)``."""
    s = np.linalg.svd(phase_gradient_matrix(observables, q, p), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def generic_rank(observables, rng: np.random.Generator, expected: int, points: int = 20,
                 redraws: int = 5) -> list[int]:
    """Ranks at ``points`` random phase points, re-drawing up to ``redraws``
    times when a point falls below ``expected`` (non-generic point)."""
    ranks = []
    while len(ranks) < points:
        rank = 0
        for _ in range(redraws):
            q = CHART.sample(rng, 1)[0]
            p = rng.normal(size=3)
            try:
                rank = independence_rank(observables, q, p)
            except DomainError:  # landed on a singular set of the potential
                continue
            if rank >= expected:
                break
        ranks.append(rank)
    return ranks


def trajectory(P: ThreeBodyPotential, x0, v0, t_end: float = 5.0, rel_tol: float = 1e-8) -> Trajectory:
    q0, p0 = phase_from_line(x0, v0)
    H = integrals(P)[0]
    return integrate_hamiltonian(H, CHART, q0, p0, t_end, rel_tol)


def drift_report(P: ThreeBodyPotential, x0, v0, t_end: float = 5.0, rel_tol: float = 1e-8) -> tuple[list[float], Trajectory]:
    traj = trajectory(P, x0, v0, t_end, rel_tol)
    return conservation_report(traj, integrals(P)), traj


def line_trajectory(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities of the bodies along a cylindrical trajectory."""
    xs, vs = [], []
    for q, p in zip(traj.q, traj.p):
        xs.append(jacobi_inverse(q))
        jac = CHART.jacobian(q)
        vs.append(FRAME.T @ np.linalg.solve(jac.T, p))
    return np.array(xs), np.array(vs)
