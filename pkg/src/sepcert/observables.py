"""Phase-space observables polynomial in the momenta, and their brackets.

A :class:`MomentumPolynomial` maps momentum multi-indices to coefficient
fields of the positions.  Brackets and coordinate changes are evaluated at
one configuration point and return a :class:`NumericPolynomial`, whose
coefficients are plain floats; the momentum algebra itself is exact.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from typing import Iterable, Mapping, Optional

import numpy as np

from .charts import Chart
from .errors import DimensionError, SingularError
from .fields import ScalarField, SymmetricTensorField

Mono = tuple[int, ...]


def unit(dim: int, j: int) -> Mono:
    return tuple(1 if i == j else 0 for i in range(dim))


def _add_mono(a: Mono, b: Mono) -> Mono:
    return tuple(x + y for x, y in zip(a, b))


class NumericPolynomial:
    """Polynomial in ``p_1..p_dim`` with float coefficients."""

    __slots__ = ("dim", "coeffs")

    def __init__(self, dim: int, coeffs: Optional[Mapping[Mono, float]] = None):
        self.dim = dim
        self.coeffs: dict[Mono, float] = {}
        for mono, c in (coeffs or {}).items():
            if len(mono) != dim:
                raise DimensionError(f"multi-index {mono} has wrong length for dim {dim}")
            if c != 0.0:
                self.coeffs[tuple(mono)] = self.coeffs.get(tuple(mono), 0.0) + float(c)

    @classmethod
    def linear(cls, vec) -> "NumericPolynomial":
        vec = np.asarray(vec, dtype=float)
        n = vec.size
        return cls(n, {unit(n, j): vec[j] for j in range(n)})

    @classmethod
    def constant(cls, dim: int, c: float) -> "NumericPolynomial":
        return cls(dim, {(0,) * dim: c})

    def __call__(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(sum(c * np.prod(p ** np.array(m)) for m, c in self.coeffs.items()))

    def __add__(self, other: "NumericPolynomial") -> "NumericPolynomial":
        self._same_dim(other)
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, 0.0) + c
        return NumericPolynomial(self.dim, out)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other: "NumericPolynomial | float") -> "NumericPolynomial":
        if not isinstance(other, NumericPolynomial):
            return self.scale(other)
        self._same_dim(other)
        out: dict[Mono, float] = {}
        for (ma, ca), (mb, cb) in itertools.product(self.coeffs.items(), other.coeffs.items()):
            m = _add_mono(ma, mb)
            out[m] = out.get(m, 0.0) + ca * cb
        return NumericPolynomial(self.dim, out)

    __rmul__ = __mul__

    def scale(self, s: float) -> "NumericPolynomial":
        return NumericPolynomial(self.dim, {m: s * c for m, c in self.coeffs.items()})

    def dp(self, j: int) -> "NumericPolynomial":
        """Partial derivative with respect to ``p_j``."""
        out = {}
        for m, c in self.coeffs.items():
            if m[j]:
                out[tuple(e - (i == j) for i, e in enumerate(m))] = c * m[j]
        return NumericPolynomial(self.dim, out)

    def homogeneous(self, degree: int) -> "NumericPolynomial":
        return NumericPolynomial(self.dim, {m: c for m, c in self.coeffs.items() if sum(m) == degree})

    @property
    def degree(self) -> int:
        return max((sum(m) for m in self.coeffs), default=0)

    def max_abs(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def coeff(self, mono: Iterable[int]) -> float:
        return self.coeffs.get(tuple(mono), 0.0)

    def _same_dim(self, other):
        if other.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __repr__(self):
        return f"NumericPolynomial({self.dim}, {self.coeffs})"


class MomentumPolynomial:
    """Observable ``sum_e c_e(q) p^e`` with coefficient fields ``c_e``."""

    def __init__(self, dim: int, terms: Mapping[Mono, ScalarField]):
        self.dim = dim
        self.terms: dict[Mono, ScalarField] = {}
        for mono, coef in terms.items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != dim or min(mono, default=0) < 0:
                raise DimensionError(f"bad multi-index {mono} for dim {dim}")
            if not isinstance(coef, ScalarField):
                coef = ScalarField.const(coef)
            if coef.is_zero:
                continue
            self.terms[mono] = self.terms[mono] + coef if mono in self.terms else coef

    @property
    def degree(self) -> int:
        return max((sum(m) for m in self.terms), default=0)

    def __add__(self, other: "MomentumPolynomial") -> "MomentumPolynomial":
        if other.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms[m] + c if m in terms else c
        return MomentumPolynomial(self.dim, terms)

    def scale(self, s: float) -> "MomentumPolynomial":
        return MomentumPolynomial(self.dim, {m: c * s for m, c in self.terms.items()})

    def at(self, q) -> NumericPolynomial:
        """Freeze the coefficients at configuration point ``q``."""
        q = np.asarray(q, dtype=float)
        return NumericPolynomial(self.dim, {m: c(q) for m, c in self.terms.items()})

    def dq_at(self, q) -> list[NumericPolynomial]:
        """``[dF/dq_j at q for j in range(dim)]`` as numeric polynomials."""
        q = np.asarray(q, dtype=float)
        grads = {m: c.grad(q) for m, c in self.terms.items()}
        return [NumericPolynomial(self.dim, {m: g[j] for m, g in grads.items()}) for j in range(self.dim)]

    def __call__(self, q, p) -> float:
        return self.at(q)(p)

    def gradients(self, q, p) -> tuple[np.ndarray, np.ndarray]:
        """Phase-space gradient ``(dF/dq, dF/dp)`` at ``(q, p)``."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        gq = np.zeros(self.dim)
        gp = np.zeros(self.dim)
        for m, c in self.terms.items():
            e = np.array(m)
            mono = np.prod(p ** e)
            gq += c.grad(q) * mono
            if e.any():
                cv = c(q)
                for j in np.nonzero(e)[0]:
                    ej = e.copy()
                    ej[j] -= 1
                    gp[j] += cv * e[j] * np.prod(p ** ej)
        return gq, gp


def _check_dims(*polys):
    dims = {p.dim for p in polys}
    if len(dims) != 1:
        raise DimensionError(f"dimension mismatch among observables: {sorted(dims)}")


def poisson_bracket(F: MomentumPolynomial, G: MomentumPolynomial, at, chart: Optional[Chart] = None) -> NumericPolynomial:
    """Canonical bracket ``{F, G}`` at the configuration point ``at``.

    Sign convention: ``{q_j, p_j} = 1``.
    """
    _check_dims(F, G)
    at = chart.check(at) if chart is not None else np.asarray(at, dtype=float)
    if at.shape != (F.dim,):
        raise DimensionError(f"point of shape {at.shape} for dim {F.dim}")
    if F is G:
        return NumericPolynomial(F.dim)
    fq, gq = F.dq_at(at), G.dq_at(at)
    f0, g0 = F.at(at), G.at(at)
    out = NumericPolynomial(F.dim)
    for j in range(F.dim):
        out = out + fq[j] * g0.dp(j) - f0.dp(j) * gq[j]
    return out


class _PointCache:
    """Memoize an expensive per-point computation for lazily derived fields."""

    def __init__(self, fn, size: int = 64):
        self.fn = fn
        self.size = size
        self.store: OrderedDict = OrderedDict()

    def __call__(self, q) -> NumericPolynomial:
        key = tuple(np.asarray(q, dtype=float).tolist())
        hit = self.store.get(key)
        if hit is None:
            hit = self.fn(np.asarray(key))
            self.store[key] = hit
            if len(self.store) > self.size:
                self.store.popitem(last=False)
        return hit


def _lazy_polynomial(dim: int, monos: Iterable[Mono], pointwise) -> MomentumPolynomial:
    cache = _PointCache(pointwise)
    terms = {m: ScalarField(lambda q, m=m: cache(q).coeff(m)) for m in monos}
    return MomentumPolynomial(dim, terms)


def _monos_of_degree(dim: int, degree: int) -> list[Mono]:
    out = []
    for combo in itertools.combinations_with_replacement(range(dim), degree):
        m = [0] * dim
        for j in combo:
            m[j] += 1
        out.append(tuple(m))
    return out


def bracket_field(F: MomentumPolynomial, G: MomentumPolynomial) -> MomentumPolynomial:
    """``{F, G}`` as an observable whose coefficients are evaluated on demand.

    Coefficient derivatives of the result are finite differences of
    finite-difference brackets unless both inputs have analytic gradients.
    """
    _check_dims(F, G)
    degrees = {sum(a) + sum(b) - 1 for a in F.terms for b in G.terms if sum(a) + sum(b) >= 1}
    monos = [m for d in sorted(degrees) for m in _monos_of_degree(F.dim, d)]
    return _lazy_polynomial(F.dim, monos, lambda q: poisson_bracket(F, G, q))


def quadratic_observable(K: SymmetricTensorField, V: Optional[ScalarField] = None) -> MomentumPolynomial:
    """``1/2 K^{jl} p_j p_l + V``."""
    if V is None:
        V = ScalarField.const(0.0)
    n = K.dim
    terms: dict[Mono, ScalarField] = {(0,) * n: V}
    for j in range(n):
        for l in range(j, n):
            mono = _add_mono(unit(n, j), unit(n, l))
            weight = 0.5 if j == l else 1.0
            terms[mono] = K.entry(j, l) * weight
    return MomentumPolynomial(n, terms)


def linear_observable(vec_field, dim: int) -> MomentumPolynomial:
    """``X^j(q) p_j`` for a vector field given as a callable."""
    return MomentumPolynomial(dim, {unit(dim, j): ScalarField(lambda q, j=j: vec_field(q)[j]) for j in range(dim)})


def transition_jacobian(src: Chart, dst: Chart, y) -> tuple[np.ndarray, np.ndarray]:
    """Source point ``q`` and ``N = dy/dq`` for the change of charts at ``y``."""
    if src.dim != dst.dim:
        raise DimensionError(f"charts {src.name!r} and {dst.name!r} differ in dimension")
    y = dst.check(y)
    x = dst.to_cartesian(y)
    q = src.check(src.from_cartesian(x))
    ja, jb = src.jacobian(q), dst.jacobian(y)
    if abs(np.linalg.det(jb)) < 1e-12 * max(1.0, np.abs(jb).max() ** jb.shape[0]):
        raise SingularError(f"singular Jacobian of chart {dst.name!r} at {y}")
    return q, np.linalg.solve(jb, ja)


def pushforward_observable(F: MomentumPolynomial, src: Chart, dst: Chart, at) -> NumericPolynomial:
    """Re-express ``F`` (given in ``src``) in chart ``dst`` at ``dst`` point ``at``.

    Uses the cotangent lift of the point transformation: ``p_src = N^T p_dst``
    with ``N = d y / d q``.
    """
    if F.dim != src.dim:
        raise DimensionError("observable and source chart differ in dimension")
    q, N = transition_jacobian(src, dst, at)
    n = F.dim
    lifted = [NumericPolynomial.linear(N[:, j]) for j in range(n)]
    out = NumericPolynomial(n)
    for mono, coef in F.terms.items():
        term = NumericPolynomial.constant(n, coef(q))
        for j, e in enumerate(mono):
            for _ in range(e):
                term = term * lifted[j]
        out = out + term
    return out


def pushforward(F: MomentumPolynomial, src: Chart, dst: Chart) -> MomentumPolynomial:
    """Field-valued version of :func:`pushforward_observable`."""
    degrees = {sum(m) for m in F.terms}
    monos = [m for d in sorted(degrees) for m in _monos_of_degree(F.dim, d)]
    return _lazy_polynomial(F.dim, monos, lambda y: pushforward_observable(F, src, dst, y))


def kinetic_observable(chart: Chart) -> MomentumPolynomial:
    """Geodesic Hamiltonian ``1/2 g^{jl} p_j p_l`` of a chart."""
    return quadratic_observable(SymmetricTensorField(chart.dim, chart.inverse_metric))
