"""Benenti families generated by the separation curve

    H_1 lam^{n-1} + ... + H_n = 1/2 lam^m mu^2 + lam^k,

their Cartesian realisation for n = 2 (a Henon-Heiles case) and the
right-hand sides of the associated dispersionless hierarchy.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import sympy as sp

from .charts import Chart, cartesian, parabolic
from .errors import DomainError
from .fields import ScalarField, fd_gradient
from .observables import MomentumPolynomial, pushforward, unit

LAMBDA_MARGIN = 1e-6
DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class SeparationCurveSpec:
    n: int
    m: int
    k: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.m < 0:
            raise ValueError("metric exponent m must be non-negative")


def char_coeffs(lam) -> np.ndarray:
    """``q_1..q_n`` with ``det(xi I - L) = xi^n + q_1 xi^{n-1} + ... + q_n``."""
    return np.poly(np.asarray(lam, dtype=float))[1:]


def _check_distinct(lam: np.ndarray):
    if lam.size > 1:
        gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(lam.size)
        if gaps.min() < DEGENERACY_TOL:
            raise DomainError(f"coincident separation coordinates {lam}")


def deltas(lam) -> np.ndarray:
    """``Delta_i = prod_{j != i} (lam_i - lam_j)``."""
    lam = np.asarray(lam, dtype=float)
    _check_distinct(lam)
    diff = lam[:, None] - lam[None, :] + np.eye(lam.size)
    return np.prod(diff, axis=1)


def tensor_diagonals(lam, extra: bool = False) -> list[np.ndarray]:
    """Diagonals of ``K_1 = I, K_{i+1} = L K_i + q_i I`` (``K_{n+1}`` if ``extra``)."""
    lam = np.asarray(lam, dtype=float)
    q = char_coeffs(lam)
    ks = [np.ones_like(lam)]
    for i in range(lam.size - (0 if extra else 1)):
        ks.append(lam * ks[-1] + q[i])
    return ks


def potentials(lam, k: int) -> np.ndarray:
    """``V_1^{(k)} .. V_n^{(k)}`` at ``lam``.

    Seeds for ``k`` below ``n`` come from the curve identity
    ``sum_j V_j lam_i^{n-j} = lam_i^k`` (a Vandermonde solve); larger ``k``
    use ``V_i^k = V_{i+1}^{k-1} - q_i V_1^{k-1}``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if k < n:
        _check_distinct(lam)
        vander = np.vander(lam, n)
        return np.linalg.solve(vander, lam ** float(k))
    q = char_coeffs(lam)
    v = potentials(lam, n - 1)
    for _ in range(n - 1, k):
        shifted = np.append(v[1:], 0.0)
        v = shifted - q * v[0]
    return v


@dataclass(frozen=True, eq=False)
class BenentiFamily:
    spec: SeparationCurveSpec
    hamiltonians: list[MomentumPolynomial]
    tensors: list  # callables lam -> diagonal of K_i
    potentials: list[ScalarField]
    chart: Chart

    @property
    def n(self) -> int:
        return self.spec.n

    def tensor_diagonal(self, i: int, lam) -> np.ndarray:
        """Diagonal of ``K_i`` (1-based) at ``lam``."""
        return tensor_diagonals(lam)[i - 1]

    def char_coeffs(self, lam) -> np.ndarray:
        return char_coeffs(lam)

    def curve_residual(self, lam, mu) -> np.ndarray:
        """``sum_j H_j lam_i^{n-j} - (1/2 lam_i^m mu_i^2 + lam_i^k)`` for each i."""
        lam = np.asarray(lam, dtype=float)
        mu = np.asarray(mu, dtype=float)
        hv = np.array([h(lam, mu) for h in self.hamiltonians])
        n, m, k = self.spec.n, self.spec.m, self.spec.k
        lhs = np.vander(lam, n) @ hv
        return lhs - (0.5 * lam ** m * mu ** 2 + lam ** float(k))


def lambda_chart(spec: SeparationCurveSpec, low: float = -2.5, high: float = 2.5) -> Chart:
    """Abstract chart of ordered separation coordinates lam_1 > ... > lam_n."""
    n = spec.n

    def ok(lam):
        if n > 1 and np.min(-np.diff(lam)) <= LAMBDA_MARGIN:
            return False
        return spec.k >= 0 or np.min(np.abs(lam)) > LAMBDA_MARGIN

    def inv_metric(lam):
        return np.diag(lam ** spec.m / deltas(lam))

    return Chart(name=f"separation-lambda{n}", dim=n, to_cartesian=None, from_cartesian=None,
                 domain_predicate=ok, sample_low=np.full(n, low), sample_high=np.full(n, high),
                 inverse_metric_fn=inv_metric, params={"n": n, "m": spec.m, "k": spec.k})


def sample_lambda(spec: SeparationCurveSpec, rng: np.random.Generator, count: int,
                  low: float = -2.5, high: float = 2.5, min_gap: float = 0.1) -> np.ndarray:
    """Ordered, well separated lambda samples (keeps 1/Delta moderate)."""
    out = []
    while len(out) < count:
        lam = np.sort(rng.uniform(low, high, spec.n))[::-1]
        if spec.n > 1 and np.min(-np.diff(lam)) < min_gap:
            continue
        if spec.k < 0 and np.min(np.abs(lam)) < min_gap:
            continue
        out.append(lam)
    return np.array(out)


def _symbolic_family(spec: SeparationCurveSpec):
    """Kinetic diagonals ``K_i G^{(m)}`` and potentials ``V_i^{(k)}`` as sympy expressions."""
    n, m, k = spec.n, spec.m, spec.k
    lam = sp.symbols(f"l1:{n + 1}")
    xi = sp.Symbol("xi")

    def monic_coeffs(roots):
        return sp.Poly(sp.Mul(*[xi - r for r in roots]), xi).all_coeffs()

    q = monic_coeffs(lam)[1:]
    delta = [sp.Mul(*[lam[i] - lam[j] for j in range(n) if j != i]) for i in range(n)]
    metric = [lam[i] ** m / delta[i] for i in range(n)]
    ks = [[sp.Integer(1)] * n]
    for i in range(n - 1):
        ks.append([lam[a] * ks[-1][a] + q[i] for a in range(n)])
    # seed: Lagrange interpolation of xi^k through the roots, valid for k < n
    base = min(k, n - 1)
    v = [sp.Integer(0)] * n
    for i in range(n):
        ell = monic_coeffs([lam[a] for a in range(n) if a != i])
        for j in range(n):
            v[j] += lam[i] ** base * ell[j] / delta[i]
    for _ in range(base, k):
        v = [v[j + 1] - q[j] * v[0] if j + 1 < n else -q[j] * v[0] for j in range(n)]
    kinetic = [[ks[i][a] * metric[a] for a in range(n)] for i in range(n)]
    return lam, kinetic, v


def build_family(spec: SeparationCurveSpec) -> BenentiFamily:
    """Hamiltonians ``H_i = 1/2 mu^T K_i G^{(m)} mu + V_i^{(k)}`` in the lambda chart.

    Coefficients carry exact derivatives, so brackets avoid nested finite
    differences.
    """
    n = spec.n
    lam, kinetic, v = _symbolic_family(spec)
    hams, pots = [], []
    for i in range(n):
        terms = {tuple(2 * e for e in unit(n, j)): ScalarField.from_expr(kinetic[i][j] / 2, lam) for j in range(n)}
        pot = ScalarField.from_expr(v[i], lam)
        terms[(0,) * n] = pot
        hams.append(MomentumPolynomial(n, terms))
        pots.append(pot)
    tensors = [lambda l, i=i: tensor_diagonals(l)[i] for i in range(n)]
    return BenentiFamily(spec, hams, tensors, pots, lambda_chart(spec))


HENON_HEILES_SPEC = SeparationCurveSpec(2, 1, 4)


def henon_heiles_chart(sign: int = 1) -> Chart:
    """Cartesian half plane ``sign * q2 > 0`` covered by the parabolic chart."""
    base = cartesian(2)
    return Chart(name="cartesian2-halfplane", dim=2, to_cartesian=base.to_cartesian,
                 from_cartesian=base.from_cartesian,
                 domain_predicate=lambda q: sign * q[1] > 1e-8,
                 sample_low=np.array([-2.0, 0.1 if sign > 0 else -2.0]),
                 sample_high=np.array([2.0, 2.0 if sign > 0 else -0.1]),
                 jacobian_fn=base.jacobian_fn, inverse_metric_fn=base.inverse_metric_fn)


def henon_heiles_cartesian(sign: int = 1) -> tuple[MomentumPolynomial, MomentumPolynomial]:
    """The (n, m, k) = (2, 1, 4) family pushed to Cartesian coordinates.

    The parabolic map ``q1 = lam1 + lam2``, ``q2^2 = -4 lam1 lam2`` is used
    with branch ``sign * q2 > 0``; points with ``q2 = 0`` are outside.
    """
    fam = build_family(HENON_HEILES_SPEC)
    src, dst = parabolic(sign), henon_heiles_chart(sign)
    h1, h2 = (pushforward(h, src, dst) for h in fam.hamiltonians)
    return h1, h2


def grid_derivative(f: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform grid."""
    f = np.asarray(f, dtype=float)
    if f.size < 5:
        raise ValueError("grid needs at least 5 points for the fourth-order stencil")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dx)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * dx)
    d[0] = fwd @ f[:5]
    d[1] = np.array([-3, -10, 18, -6, 1]) / (12 * dx) @ f[:5]
    d[-1] = -(fwd @ f[::-1][:5])
    d[-2] = -(np.array([-3, -10, 18, -6, 1]) / (12 * dx) @ f[::-1][:5])
    return d


def _char_to_lambda(s: np.ndarray) -> np.ndarray:
    roots = np.roots(np.concatenate([[1.0], s]))
    if np.max(np.abs(roots.imag)) > 1e-10 * max(1.0, np.max(np.abs(roots))):
        raise DomainError(f"characteristic coefficients {s} have complex roots")
    return np.sort(roots.real)[::-1]


def dispersionless_rhs(family: BenentiFamily, i: int, x, fields, derivs=None, coords: str = "char") -> np.ndarray:
    """Time derivatives ``d q / d t_i = K_i(q) d q / d x`` sampled on a grid.

    ``fields`` has shape ``(n, len(x))``.  ``coords`` selects the dependent
    variables: ``"char"`` for the characteristic coefficients of ``L`` and
    ``"cartesian"`` (n = 2 only) for the parabolic-map coordinates.  Missing
    ``derivs`` are computed with :func:`grid_derivative`.
    """
    n = family.n
    x = np.asarray(x, dtype=float)
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    if fields.shape != (n, x.size):
        raise ValueError(f"fields must have shape {(n, x.size)}")
    if not 1 <= i <= n:
        raise ValueError(f"flow index must be in 1..{n}")
    if derivs is None:
        dx = np.diff(x)
        if x.size >= 2 and not np.allclose(dx, dx[0]):
            raise ValueError("grid must be uniform to differentiate fields")
        derivs = np.array([grid_derivative(f, dx[0] if dx.size else 1.0) for f in fields])
    derivs = np.atleast_2d(np.asarray(derivs, dtype=float))

    if coords == "char":
        to_lambda, from_lambda = _char_to_lambda, char_coeffs
    elif coords == "cartesian":
        if n != 2:
            raise ValueError("cartesian dependent variables exist only for n = 2")
        chart = parabolic(1)
        to_lambda = lambda q: chart.from_cartesian(np.array([q[0], abs(q[1])]))
        from_lambda = chart.to_cartesian
    else:
        raise ValueError(f"unknown coordinates {coords!r}")

    out = np.empty_like(fields)
    for col in range(x.size):
        q = fields[:, col]
        if coords == "cartesian" and abs(q[1]) < 1e-8:
            raise DomainError("parabolic degeneracy q2 = 0 on the grid")
        lam = to_lambda(q)
        _check_distinct(lam)
        jac = fd_gradient(from_lambda, lam).T  # d q / d lam
        if coords == "cartesian" and q[1] < 0:
            jac[1] *= -1.0
        k_q = jac @ np.diag(tensor_diagonals(lam)[i - 1]) @ np.linalg.inv(jac)
        out[:, col] = k_q @ derivs[:, col]
    return out
