"""Best-approximating separable potentials in one-parameter planar families.

For a family member (a Killing tensor ``K`` and its separable coordinates
``(a, b)``) a potential ``V`` is least-squares projected onto
``W = (f(a) - g(b)) / D(a, b)``.  The obstruction to separability is

    mu = g_{jl} m^j m^l,   m = K grad V - grad V_K,   grad V_K = K grad W,

and the family parameter is chosen by minimising the integral of ``mu``
over a region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

from .charts import Chart, cartesian
from .errors import DomainError, IllConditionedError
from .fields import ScalarField, SymmetricTensorField
from .killing import characteristic_residual

POLY_DEGREE = 8
FOURIER_ORDER = 8
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

_x, _y = sp.symbols("x y")


def quadrupole_potential(G: float, D: float) -> ScalarField:
    """``G / r + D / r^3 (3 x^2 / r^2 - 1)``, undefined at the origin."""
    r = sp.sqrt(_x ** 2 + _y ** 2)
    field_ = ScalarField.from_expr(G / r + D / r ** 3 * (3 * _x ** 2 / r ** 2 - 1), [_x, _y])

    def guard(fn):
        def inner(q):
            if math.hypot(q[0], q[1]) < 1e-12:
                raise DomainError("quadrupole potential is singular at the origin")
            return fn(q)
        return inner

    return ScalarField(guard(field_.value), guard(field_.gradient), guard(field_.hessian))


# --- separable families --------------------------------------------------


@dataclass(frozen=True)
class FamilyMember:
    """One separable web: Killing tensor and coordinates with gradients."""

    kind: str
    param: float
    killing: SymmetricTensorField
    coords: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    denominator: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]
    a_basis: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    b_basis: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    k_grid: Callable[[np.ndarray, np.ndarray], np.ndarray]
    singular_points: tuple = ()
    a_range: Optional[tuple] = None
    b_range: Optional[tuple] = None

    def scaled_to(self, X, Y) -> "FamilyMember":
        """Copy whose polynomial bases are Chebyshev on the coordinate ranges of the points."""
        a, b, _, _ = self.coords(np.array([X, Y]))
        return replace(self, a_range=(float(a.min()), float(a.max())), b_range=(float(b.min()), float(b.max())))

    @property
    def chart(self) -> Chart:
        return cartesian(2)

    def design(self, X: np.ndarray, Y: np.ndarray):
        """Basis values and Cartesian gradients at points ``(X, Y)``.

        Returns ``(B, Bx, By)`` each of shape ``(npoints, nbasis)``.
        """
        a, b, ga, gb = self.coords(np.array([X, Y]))
        den, da, db = self.denominator(a, b)
        fa, dfa = self.a_basis(a, self.a_range)
        gbv, dgb = self.b_basis(b, self.b_range)
        vals = np.concatenate([fa, -gbv], axis=0) / den
        # d/da and d/db of (+-basis)/den
        dvals_a = np.concatenate([dfa, np.zeros_like(gbv)], axis=0) / den - vals * da / den
        dvals_b = np.concatenate([np.zeros_like(fa), -dgb], axis=0) / den - vals * db / den
        bx = dvals_a * ga[0] + dvals_b * gb[0]
        by = dvals_a * ga[1] + dvals_b * gb[1]
        return vals.T, bx.T, by.T


def _poly_basis(degree: int, start: int, inverse: bool):
    """Polynomials of degree ``start..degree`` (Chebyshev on ``rng`` when given) and optionally ``1/t``."""
    def basis(t, rng=None):
        lo, hi = rng if rng is not None and rng[1] > rng[0] else (-1.0, 1.0)
        s = (2 * t - lo - hi) / (hi - lo)
        vals, ders = [], []
        for j in range(start, degree + 1):
            T = np.polynomial.chebyshev.Chebyshev.basis(j)
            vals.append(T(s))
            ders.append(T.deriv()(s) * 2 / (hi - lo))
        if inverse:
            vals.append(1.0 / t)
            ders.append(-1.0 / t ** 2)
        return np.array(vals), np.array(ders)
    return basis


def _fourier_basis(order: int):
    def basis(t, rng=None):
        vals, ders = [], []
        for j in range(1, order + 1):
            vals += [np.cos(j * t), np.sin(j * t)]
            ders += [-j * np.sin(j * t), j * np.cos(j * t)]
        return np.array(vals), np.array(ders)
    return basis


def _elliptic_coords(c: float, P):
    X, Y = P
    rp, rm = np.hypot(X - c, Y), np.hypot(X + c, Y)
    ep = np.array([(X - c) / rp, Y / rp])
    em = np.array([(X + c) / rm, Y / rm])
    return 0.5 * (rp + rm), 0.5 * (rm - rp), 0.5 * (ep + em), 0.5 * (em - ep)


def elliptic_member(c: float, degree: int = POLY_DEGREE) -> FamilyMember:
    """Confocal elliptic web with foci ``(+-c, 0)``.

    ``u = (r_+ + r_-)/2``, ``v = (r_- - r_+)/2`` (the chart convention of
    :func:`sepcert.charts.elliptic`), ``D = u^2 - v^2 = r_+ r_-``.
    """
    c = float(c)
    K = SymmetricTensorField.from_expr([[_y ** 2 + c * c, -_x * _y], [-_x * _y, _x ** 2]], [_x, _y])

    def coords(P):
        return _elliptic_coords(c, P)

    def den(a, b):
        return a * a - b * b, 2 * a, -2 * b

    def k_grid(X, Y):
        return np.array([[Y ** 2 + c * c, -X * Y], [-X * Y, X ** 2]])

    return FamilyMember("elliptic", c, K, coords, den, _poly_basis(degree, 0, True),
                        _poly_basis(degree, 1, True), k_grid, ((c, 0.0), (-c, 0.0)))


def polar_member(s: float, degree: int = POLY_DEGREE) -> FamilyMember:
    """Polar web centred at ``(s, 0)``: ``W = f(r)/r^2 - g(theta)/r^2``."""
    s = float(s)
    K = SymmetricTensorField.from_expr([[_y ** 2, -(_x - s) * _y], [-(_x - s) * _y, (_x - s) ** 2]], [_x, _y])

    def coords(P):
        X, Y = P
        r = np.hypot(X - s, Y)
        th = np.arctan2(Y, X - s)
        return r, th, np.array([(X - s) / r, Y / r]), np.array([-Y / r ** 2, (X - s) / r ** 2])

    def den(a, b):
        return a * a, 2 * a, np.zeros_like(b)

    def k_grid(X, Y):
        return np.array([[Y ** 2, -(X - s) * Y], [-(X - s) * Y, (X - s) ** 2]])

    return FamilyMember("polar", s, K, coords, den, _poly_basis(degree, 0, True),
                        _fourier_basis(FOURIER_ORDER), k_grid, ((s, 0.0),))


def parabolic_member(s: float, degree: int = POLY_DEGREE) -> FamilyMember:
    """Parabolic web with focus ``(s, 0)`` and axis x.

    ``lam1,2 = (x - s +- r)/2`` with ``r`` the focal distance, ``D = lam1 - lam2 = r``.
    """
    s = float(s)
    K = SymmetricTensorField.from_expr([[0, -_y / 2], [-_y / 2, _x - s]], [_x, _y])

    def coords(P):
        X, Y = P
        r = np.hypot(X - s, Y)
        er = np.array([(X - s) / r, Y / r])
        ex = np.array([np.ones_like(X), np.zeros_like(X)])
        return 0.5 * (X - s + r), 0.5 * (X - s - r), 0.5 * (ex + er), 0.5 * (ex - er)

    def den(a, b):
        return a - b, np.ones_like(a), -np.ones_like(b)

    def k_grid(X, Y):
        return np.array([[np.zeros_like(X), -Y / 2], [-Y / 2, X - s]])

    return FamilyMember("parabolic", s, K, coords, den, _poly_basis(degree, 0, True),
                        _poly_basis(degree, 1, True), k_grid, ((s, 0.0),))


FAMILIES = {"elliptic": elliptic_member, "polar": polar_member, "parabolic": parabolic_member}


@dataclass(frozen=True)
class SeparableFamily:
    kind: str
    degree: int = POLY_DEGREE

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise KeyError(f"unknown separable family {self.kind!r}; known: {sorted(FAMILIES)}")

    def member(self, param: float) -> FamilyMember:
        return FAMILIES[self.kind](param, self.degree)


# --- regions and projection ----------------------------------------------


@dataclass(frozen=True)
class FitRegion:
    """Annulus about the origin with a tensor-product quadrature grid.

    Radial nodes are Gauss-Legendre; angular nodes are uniform and offset by
    half a step so that no node lies on a coordinate axis.
    """

    r_min: float = 0.8
    r_max: float = 2.5
    n_r: int = 24
    n_theta: int = 96
    weight: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("annulus needs 0 < r_min < r_max")

    def grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xr, wr = np.polynomial.legendre.leggauss(self.n_r)
        half = 0.5 * (self.r_max - self.r_min)
        r = half * (xr + 1.0) + self.r_min
        th = (np.arange(self.n_theta) + 0.5) * 2 * np.pi / self.n_theta
        R, T = np.meshgrid(r, th, indexing="ij")
        w = (half * wr)[:, None] * R * (2 * np.pi / self.n_theta)
        X, Y = (R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()
        w = w.ravel()
        if self.weight is not None:
            w = w * self.weight(X, Y)
        return X, Y, w

    def avoids(self, points: Sequence[tuple[float, float]], margin: float = 1e-6) -> bool:
        return all(not (self.r_min - margin <= math.hypot(*p) <= self.r_max + margin) for p in points)


@dataclass
class SeparableFit:
    member: FamilyMember
    coefficients: np.ndarray
    rms: float
    W: ScalarField

    def grad_W(self, X, Y):
        _, bx, by = self.member.design(np.atleast_1d(X), np.atleast_1d(Y))
        return bx @ self.coefficients, by @ self.coefficients


def _eval_potential(V: ScalarField, X, Y):
    vals = np.array([V(np.array([x, y])) for x, y in zip(X, Y)])
    grads = np.array([V.grad(np.array([x, y])) for x, y in zip(X, Y)])
    return vals, grads[:, 0], grads[:, 1]


def _weighted_lstsq(A, b, w, rcond=1e-13):
    sw = np.sqrt(w)
    M = A * sw[:, None]
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0] = 1.0
    coef, _, rank, sv = np.linalg.lstsq(M / scale, b * sw, rcond=rcond)
    return coef / scale, rank, sv


def _field_from(member: FamilyMember, coef: np.ndarray) -> ScalarField:
    def value(q):
        B, _, _ = member.design(np.array([q[0]]), np.array([q[1]]))
        return float(B[0] @ coef)

    def grad(q):
        _, bx, by = member.design(np.array([q[0]]), np.array([q[1]]))
        return np.array([bx[0] @ coef, by[0] @ coef])

    return ScalarField(value, grad)


class _Samples:
    """Potential values and gradients on a region grid, computed once."""

    def __init__(self, V: ScalarField, region: FitRegion):
        self.X, self.Y, self.w = region.grid()
        self.V, self.Vx, self.Vy = _eval_potential(V, self.X, self.Y)


def separable_projection(V: ScalarField, member: FamilyMember, region: FitRegion,
                         _samples: Optional[_Samples] = None) -> SeparableFit:
    """Weighted least-squares fit of ``V`` by the member's separable ansatz."""
    s = _samples or _Samples(V, region)
    member = member.scaled_to(s.X, s.Y)
    B, _, _ = member.design(s.X, s.Y)
    if not np.all(np.isfinite(B)):
        raise IllConditionedError("separable basis is singular on the region grid")
    coef, rank, sv = _weighted_lstsq(B, s.V, s.w)
    # one exact degeneracy (constant in both f and g) is expected
    if rank < B.shape[1] - 1 or sv[-1] <= 0:
        raise IllConditionedError(f"projection rank {rank} of {B.shape[1]} columns")
    res = s.V - B @ coef
    rms = float(np.sqrt(np.sum(s.w * res ** 2) / np.sum(s.w)))
    return SeparableFit(member, coef, rms, _field_from(member, coef))


def mu_scalar(K: SymmetricTensorField, V: ScalarField, V_K: Optional[ScalarField], chart: Chart, at) -> float:
    """``g_{jl} m^j m^l`` with ``m = K dV - g dV_K`` (indices raised).

    Without ``V_K`` the best local closure of ``K dV`` is used: its residual
    is the characteristic 2-form ``R``, and ``mu = 1/2 R_ij R^ij``.
    """
    at = chart.check(at)
    ginv = chart.inverse_metric(at)
    if V_K is None:
        R = characteristic_residual(K, V, chart, at)
        return float(0.5 * np.einsum("ij,ia,jb,ab->", R, ginv, ginv, R))
    m = K(at) @ V.grad(at) - ginv @ V_K.grad(at)
    return float(m @ chart.metric(at) @ m)


def integral_potential_gradient(fit: SeparableFit) -> ScalarField:
    """Field whose gradient is ``K grad W`` (values are not needed for mu)."""
    K = fit.member.killing

    def grad(q):
        gx, gy = fit.grad_W(q[0], q[1])
        return K(q) @ np.array([gx[0], gy[0]])

    return ScalarField(lambda q: float("nan"), grad)


def objective(V: ScalarField, member: FamilyMember, region: FitRegion,
              _samples: Optional[_Samples] = None) -> tuple[float, SeparableFit]:
    """``J = sum_grid w * mu`` with ``V_K`` from the separable projection."""
    s = _samples or _Samples(V, region)
    fit = separable_projection(V, member, region, s)
    _, bx, by = fit.member.design(s.X, s.Y)
    dx = s.Vx - bx @ fit.coefficients
    dy = s.Vy - by @ fit.coefficients
    Kg = member.k_grid(s.X, s.Y)
    mx = Kg[0, 0] * dx + Kg[0, 1] * dy
    my = Kg[1, 0] * dx + Kg[1, 1] * dy
    return float(np.sum(s.w * (mx ** 2 + my ** 2))), fit


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-6,
                   max_iter: int = 200) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


@dataclass
class FamilyFit:
    param: float
    objective_value: float
    curve: list[tuple[float, float]]
    fit: SeparableFit
    region: FitRegion
    family: SeparableFamily
    extras: dict = field(default_factory=dict)

    @property
    def param_squared(self) -> float:
        return self.param ** 2


def fit_family(V: ScalarField, family: SeparableFamily, region: FitRegion, param_range: tuple[float, float],
               n_scan: int = 25, tol: float = 1e-6, scan_in_square: bool = True) -> FamilyFit:
    """Coarse scan of the parameter range followed by golden-section refinement.

    For the elliptic family the parameter is the focal distance ``c``; with
    ``scan_in_square`` the scan grid is uniform in ``c^2``.
    """
    lo, hi = param_range
    if not 0 < lo < hi and family.kind == "elliptic":
        raise ValueError("focal range must be positive")
    samples = _Samples(V, region)

    def J(p):
        try:
            val = objective(V, family.member(p), region, samples)[0]
        except (IllConditionedError, DomainError, FloatingPointError):
            return math.inf
        return val if math.isfinite(val) else math.inf

    if scan_in_square and family.kind == "elliptic":
        grid = np.sqrt(np.linspace(lo ** 2, hi ** 2, n_scan))
    else:
        grid = np.linspace(lo, hi, n_scan)
    curve = [(float(p), J(p)) for p in grid]
    vals = np.array([v for _, v in curve])
    if not np.any(np.isfinite(vals)):
        raise DomainError("objective is non-finite over the whole parameter range")
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best, jbest = golden_section(J, float(a), float(b), tol)
    if vals[i] < jbest:
        best, jbest = float(grid[i]), float(vals[i])
    fit = separable_projection(V, family.member(best), region, samples)
    return FamilyFit(best, jbest, curve, fit, region, family)


# --- comparison with the two-term elliptic form ---------------------------


def we_form_basis(c: float, X, Y) -> np.ndarray:
    """Columns ``u / (u^2 - v^2)`` and ``1 / (u (u^2 - v^2))`` on points."""
    a, b, _, _ = _elliptic_coords(float(c), np.array([np.atleast_1d(X), np.atleast_1d(Y)], dtype=float))
    den = a * a - b * b
    return np.array([a / den, 1.0 / (a * den)]).T


def we_expression(G: float, D: float, c: float, scale: float = 2.0) -> ScalarField:
    """``2 (G s - 4 D / s) / (s^2 - t^2)`` with ``s = scale * u``, ``t = scale * v``.

    ``scale = 2`` is the coordinate normalisation under which the monopole
    of this expression equals ``G / r``; the radial coordinate of the
    expression is our ``u``.
    """
    def value(q):
        B = we_form_basis(c, q[0], q[1])[0]
        return float(2 * G / scale * B[0] - 8 * D / scale ** 3 * B[1])

    return ScalarField(value)


@dataclass
class WeComparison:
    coefficients: np.ndarray  # best (A, B) in (A u + B / u) / (u^2 - v^2)
    form_rms: float           # RMS of W - best two-term form
    floor: float              # projection residual RMS(V - W)
    expression_rms: float          # RMS of W - we_expression at the same focus

    @property
    def ratio(self) -> float:
        return self.form_rms / self.floor if self.floor > 0 else math.inf


def compare_with_we(V: ScalarField, fit: SeparableFit, region: FitRegion, G: float, D: float) -> WeComparison:
    X, Y, w = region.grid()
    c = fit.member.param
    B, _, _ = fit.member.design(X, Y)
    Wv = B @ fit.coefficients
    A = we_form_basis(c, X, Y)
    coef, *_ = _weighted_lstsq(A, Wv, w)
    wn = w / w.sum()
    form_rms = float(np.sqrt(np.sum(wn * (Wv - A @ coef) ** 2)))
    pw = we_expression(G, D, c)
    expression_rms = float(np.sqrt(np.sum(wn * (Wv - np.array([pw(np.array([x, y])) for x, y in zip(X, Y)])) ** 2)))
    return WeComparison(coef, form_rms, fit.rms, expression_rms)


def self_consistency_floor(region: FitRegion, c: float, G: float = 1.0, D: float = 0.1) -> float:
    """Projection residual for a potential that is exactly of the two-term form."""
    pw = we_expression(G, D, c)
    return separable_projection(pw, elliptic_member(c), region).rms


def mu_identity_diagnostic(V: ScalarField, fit: SeparableFit, points) -> list[dict]:
    """Tabulate readings of the claimed identity ``d mu = d K dV``.

    For each point: ``|grad mu|`` (mu with the fitted ``V_K``), the norm of
    the characteristic 2-form ``|d(K dV)|`` and ``|d(K dW)|``.  Nothing is
    asserted; the numbers are for inspection.
    """
    K = fit.member.killing
    chart = cartesian(2)
    VK = integral_potential_gradient(fit)
    mu = ScalarField(lambda q: mu_scalar(K, V, VK, chart, q))
    rows = []
    for q in np.atleast_2d(points):
        rows.append({
            "point": [float(q[0]), float(q[1])],
            "grad_mu": float(np.linalg.norm(mu.grad(q))),
            "dKdV": float(np.max(np.abs(characteristic_residual(K, V, chart, q)))),
            "dKdW": float(np.max(np.abs(characteristic_residual(K, fit.W, chart, q)))),
        })
    return rows
