"""Scalar and symmetric 2-tensor fields on a configuration space.

Fields are thin wrappers around plain callables of a coordinate vector.
Derivatives come from an analytic callable when one is supplied and from
central finite differences otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

from .errors import DimensionError, NonFiniteError

FD_REL_STEP = 1e-6
# nested differences need a coarser step so roundoff stays below ~1e-8
FD_NESTED_STEP = 1e-4

ArrayFn = Callable[[np.ndarray], np.ndarray]


def fd_steps(q: np.ndarray, rel: float = FD_REL_STEP) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(q))


def fd_gradient(fn: Callable[[np.ndarray], float], q: np.ndarray, rel: float = FD_REL_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar (or array-valued) function."""
    q = np.asarray(q, dtype=float)
    h = fd_steps(q, rel)
    cols = []
    for j in range(q.size):
        e = np.zeros_like(q)
        e[j] = h[j]
        cols.append((np.asarray(fn(q + e)) - np.asarray(fn(q - e))) / (2.0 * h[j]))
    return np.stack(cols, axis=0)


def _check_finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{what} is not finite: {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A scalar function of configuration coordinates.

    ``constant`` is set for fields known to be constant; such fields have a
    zero gradient and are pruned from polynomials when the constant is 0.
    """

    value: Callable[[np.ndarray], float]
    gradient: Optional[ArrayFn] = None
    hessian: Optional[ArrayFn] = None
    constant: Optional[float] = None

    @classmethod
    def const(cls, c: float) -> "ScalarField":
        c = float(c)
        return cls(lambda q: c, lambda q: np.zeros(np.size(q)),
                   lambda q: np.zeros((np.size(q), np.size(q))), constant=c)

    @classmethod
    def from_expr(cls, expr, symbols: Sequence[sp.Symbol]) -> "ScalarField":
        """Build a field with exact derivatives from a sympy expression."""
        expr = sp.sympify(expr)
        symbols = list(symbols)
        if not expr.free_symbols & set(symbols):
            return cls.const(float(expr))
        f = sp.lambdify([symbols], expr, "numpy")
        grad = [sp.diff(expr, s) for s in symbols]
        g = sp.lambdify([symbols], grad, "numpy")
        hs = sp.lambdify([symbols], [[sp.diff(gi, s) for s in symbols] for gi in grad], "numpy")
        return cls(lambda q: float(f(q)),
                   lambda q: np.array(g(q), dtype=float),
                   lambda q: np.array(hs(q), dtype=float))

    def __call__(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(_check_finite(self.value(q), "field value"))

    def grad(self, q, rel: float = FD_REL_STEP) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.gradient is not None:
            g = np.asarray(self.gradient(q), dtype=float).reshape(q.shape)
        else:
            g = fd_gradient(self.value, q, rel)
        return _check_finite(g, "field gradient")

    def hess(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.hessian is not None:
            h = np.asarray(self.hessian(q), dtype=float)
        elif self.gradient is not None:
            h = fd_gradient(lambda x: self.grad(x), q)
        else:
            h = fd_gradient(lambda x: self.grad(x, FD_NESTED_STEP), q, FD_NESTED_STEP)
        return _check_finite(0.5 * (h + h.T), "field hessian")

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0

    def __add__(self, other: "ScalarField | float") -> "ScalarField":
        other = _as_field(other)
        if self.constant is not None and other.constant is not None:
            return ScalarField.const(self.constant + other.constant)
        grad = None
        if self.gradient is not None and other.gradient is not None:
            grad = lambda q: self.grad(q) + other.grad(q)
        return ScalarField(lambda q: self.value(q) + other.value(q), grad)

    __radd__ = __add__

    def __neg__(self) -> "ScalarField":
        return self * -1.0

    def __sub__(self, other):
        return self + (-_as_field(other))

    def __mul__(self, other: "ScalarField | float") -> "ScalarField":
        other = _as_field(other)
        if self.constant is not None and other.constant is not None:
            return ScalarField.const(self.constant * other.constant)
        if other.constant is not None:
            self, other = other, self
        if self.constant is not None:
            c = self.constant
            if c == 0.0:
                return ScalarField.const(0.0)
            grad = None if other.gradient is None else (lambda q: c * other.grad(q))
            return ScalarField(lambda q: c * other.value(q), grad)
        grad = None
        if self.gradient is not None and other.gradient is not None:
            grad = lambda q: self.grad(q) * other(q) + self(q) * other.grad(q)
        return ScalarField(lambda q: self.value(q) * other.value(q), grad)

    __rmul__ = __mul__


def _as_field(x) -> ScalarField:
    return x if isinstance(x, ScalarField) else ScalarField.const(float(x))


@dataclass(frozen=True, eq=False)
class SymmetricTensorField:
    """Symmetric dim x dim matrix-valued field, contravariant indices.

    ``derivative`` (optional) returns the array ``d[a, i, j] = d_a K^{ij}``.
    """

    dim: int
    components: ArrayFn
    derivative: Optional[ArrayFn] = None
    _raw: ArrayFn = field(init=False, repr=False)

    def __post_init__(self):
        raw = self.components
        object.__setattr__(self, "_raw", raw)

        def sym(q):
            m = np.asarray(raw(np.asarray(q, dtype=float)), dtype=float)
            if m.shape != (self.dim, self.dim):
                raise DimensionError(f"tensor components have shape {m.shape}, expected {(self.dim, self.dim)}")
            return 0.5 * (m + m.T)

        object.__setattr__(self, "components", sym)

    @classmethod
    def from_expr(cls, matrix, symbols: Sequence[sp.Symbol]) -> "SymmetricTensorField":
        m = sp.Matrix(matrix)
        symbols = list(symbols)
        n = len(symbols)
        f = sp.lambdify([symbols], m, "numpy")
        d = sp.lambdify([symbols], [m.diff(s).tolist() for s in symbols], "numpy")
        return cls(n, lambda q: np.array(f(q), dtype=float).reshape(n, n),
                   lambda q: np.array(d(q), dtype=float).reshape(n, n, n))

    @classmethod
    def constant_matrix(cls, m) -> "SymmetricTensorField":
        m = np.array(m, dtype=float)
        n = m.shape[0]
        return cls(n, lambda q: m, lambda q: np.zeros((n, n, n)))

    def __call__(self, q) -> np.ndarray:
        return _check_finite(self.components(q), "tensor components")

    def deriv(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.derivative is not None:
            d = np.asarray(self.derivative(q), dtype=float)
            d = 0.5 * (d + np.swapaxes(d, 1, 2))
        else:
            d = fd_gradient(self.components, q)
        return _check_finite(d, "tensor derivative")

    def entry(self, i: int, j: int) -> ScalarField:
        """Component (i, j) as a scalar field."""
        grad = None
        if self.derivative is not None:
            grad = lambda q: self.deriv(q)[:, i, j]
        return ScalarField(lambda q: self.components(q)[i, j], grad)


def identity_tensor(dim: int) -> SymmetricTensorField:
    return SymmetricTensorField.constant_matrix(np.eye(dim))
