"""Killing tensors, L-tensors and the Benenti hierarchy.

Certification is by sampling: a tensor is declared Killing when the
bracket of its quadratic form with the geodesic Hamiltonian vanishes at
every sampled point, to an absolute tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .charts import Chart, cartesian
from .errors import DegenerateEigenvaluesWarning, DimensionError, DomainError, NotClosedError
from .fields import FD_NESTED_STEP, FD_REL_STEP, ScalarField, SymmetricTensorField, fd_gradient
from .observables import NumericPolynomial, kinetic_observable, poisson_bracket, quadratic_observable

KILLING_TOL = 1e-6
TORSION_TOL = 1e-6
SIMPLICITY_GAP = 1e-8
PROBE_POINTS = 25
QUADRATURE_NODES = 64


def _check_dim(tensor: SymmetricTensorField, chart: Chart):
    if tensor.dim != chart.dim:
        raise DimensionError(f"tensor of dim {tensor.dim} on chart of dim {chart.dim}")


def probe_points(chart: Chart, n: int = PROBE_POINTS, seed: int = 0) -> np.ndarray:
    """Quasi-random (scrambled Halton) points inside the chart domain."""
    sampler = qmc.Halton(d=chart.dim, scramble=True, seed=seed)
    out = []
    while len(out) < n:
        pts = qmc.scale(sampler.random(4 * n), chart.sample_low, chart.sample_high)
        out.extend(q for q in pts if chart.contains(q))
    return np.array(out[:n])


@dataclass(frozen=True, eq=False)
class LTensorCandidate:
    """Symmetric tensor read as a (1,1) tensor through the chart metric."""

    tensor: SymmetricTensorField
    chart: Chart

    def __post_init__(self):
        _check_dim(self.tensor, self.chart)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def mixed(self, q) -> np.ndarray:
        """``L^i_j = L^{ik} g_{kj}``."""
        return self.tensor(q) @ self.chart.metric(q)

    def eigenvalue_gaps(self, points) -> np.ndarray:
        """Smallest relative gap between eigenvalues at each point."""
        gaps = []
        for q in points:
            ev = np.linalg.eigvals(self.mixed(q))
            if np.max(np.abs(ev.imag)) > SIMPLICITY_GAP * max(1.0, np.max(np.abs(ev))):
                gaps.append(0.0)
                continue
            ev = np.sort(ev.real)
            scale = max(1.0, np.max(np.abs(ev)))
            gaps.append(np.min(np.diff(ev)) / scale if ev.size > 1 else np.inf)
        return np.array(gaps)

    def has_simple_spectrum(self, points=None) -> bool:
        if points is None:
            points = probe_points(self.chart)
        return bool(np.all(self.eigenvalue_gaps(points) > SIMPLICITY_GAP))


def elliptic_l_tensor(c: float, axis: int = 0) -> LTensorCandidate:
    """``L = x (x) x + c^2 e_a (x) e_a`` in the Cartesian plane.

    The hierarchy tensor ``tr(L) I - L`` is the elliptic Killing tensor
    ``L_z^2 + c^2 p_b^2`` (``b != a``), whose foci are ``+-c e_a'`` with
    ``a' != a``: ``axis=0`` puts the foci on the y-axis, ``axis=1`` on the x-axis.
    """
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    shift = np.zeros((2, 2))
    shift[axis, axis] = float(c) ** 2

    def comps(q):
        return np.outer(q, q) + shift

    def deriv(q):
        d = np.zeros((2, 2, 2))
        for a in range(2):
            e = np.eye(2)[a]
            d[a] = np.outer(e, q) + np.outer(q, e)
        return d

    return LTensorCandidate(SymmetricTensorField(2, comps, deriv), cartesian(2))


def benenti_hierarchy(L: LTensorCandidate, n: int | None = None, check: bool = True) -> list[SymmetricTensorField]:
    """``K_0 = I``, ``K_a = tr(K_{a-1} L) I / a - K_{a-1} L`` as contravariant fields."""
    chart = L.chart
    n = chart.dim if n is None else n
    if check and not L.has_simple_spectrum():
        warnings.warn("L-tensor candidate has degenerate eigenvalues on the probe sample",
                      DegenerateEigenvaluesWarning, stacklevel=2)

    def mixed_chain(q) -> list[np.ndarray]:
        lm = L.mixed(q)
        eye = np.eye(chart.dim)
        chain = [eye]
        for a in range(1, n):
            prev = chain[-1] @ lm
            chain.append(np.trace(prev) / a * eye - prev)
        return chain

    def make(a):
        return SymmetricTensorField(chart.dim, lambda q: mixed_chain(q)[a] @ chart.inverse_metric(q))

    return [make(a) for a in range(n)]


def nijenhuis_torsion(L: LTensorCandidate, at) -> np.ndarray:
    """``N[k, i, j]``, the Nijenhuis torsion of the (1,1) tensor ``L`` at ``at``."""
    at = L.chart.check(at)
    lm = L.mixed(at)
    dl = fd_gradient(L.mixed, at)  # dl[c, u, d] = d_c L^u_d
    first = np.einsum("ai,akj->kij", lm, dl)
    curl = np.einsum("ka,iaj->kij", lm, dl)
    return first - np.swapaxes(first, 1, 2) - (curl - np.swapaxes(curl, 1, 2))


@dataclass
class KillingReport:
    passed: bool
    worst_residual: float
    residuals: list[float] = field(default_factory=list)
    factors: list[np.ndarray] = field(default_factory=list)

    def __bool__(self):
        return self.passed


def _geodesic_bracket(K: SymmetricTensorField, chart: Chart, q) -> NumericPolynomial:
    return poisson_bracket(kinetic_observable(chart), quadratic_observable(K), q, chart)


def _sample(chart: Chart, samples, seed) -> np.ndarray:
    if isinstance(samples, int):
        return chart.sample(np.random.default_rng(seed), samples)
    return np.atleast_2d(np.asarray(samples, dtype=float))


def is_killing(K: SymmetricTensorField, chart: Chart, samples=50, seed: int = 0, tol: float = KILLING_TOL) -> KillingReport:
    """Sampled test of ``{1/2 g(p,p), 1/2 K(p,p)} = 0``."""
    _check_dim(K, chart)
    res = [_geodesic_bracket(K, chart, q).homogeneous(3).max_abs() for q in _sample(chart, samples, seed)]
    worst = max(res, default=0.0)
    return KillingReport(worst < tol, worst, res)


def _metric_multiples(chart: Chart, q) -> list[NumericPolynomial]:
    ginv = chart.inverse_metric(q)
    pj =[NumericPolynomial.linear(np.eye(chart.dim)[j]) for j in range(chart.dim)]
    quad = NumericPolynomial(chart.dim)
    for j in range(chart.dim):
        for l in range(chart.dim):
            quad = quad + (pj[j] * pj[l]).scale(ginv[j, l])
    return [pj[j] * quad for j in range(chart.dim)]


def is_conformal_killing(K: SymmetricTensorField, chart: Chart, samples=20, seed: int = 0,
                         tol: float = KILLING_TOL) -> KillingReport:
    """Sampled test that the geodesic bracket is divisible by ``g(p, p)``.

    At each point the cubic bracket is fitted by ``(a . p) g^{jl} p_j p_l``;
    the recovered covector ``a`` is reported in ``factors``.
    """
    _check_dim(K, chart)
    res, factors = [], []
    for q in _sample(chart, samples, seed):
        cubic = _geodesic_bracket(K, chart, q).homogeneous(3)
        basis = _metric_multiples(chart, q)
        monos = sorted(set(cubic.coeffs).union(*(b.coeffs for b in basis)))
        A = np.array([[b.coeff(m) for b in basis] for m in monos]) if monos else np.zeros((0, chart.dim))
        rhs = np.array([cubic.coeff(m) for m in monos])
        if monos:
            a, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            r = np.max(np.abs(A @ a - rhs))
        else:
            a, r = np.zeros(chart.dim), 0.0
        factors.append(a)
        res.append(float(r))
    worst = max(res, default=0.0)
    return KillingReport(worst < tol, worst, res, factors)


def is_special_conformal(J: SymmetricTensorField, chart: Chart, samples=20, seed: int = 0) -> tuple[KillingReport, KillingReport]:
    """Conformal-Killing test of ``J`` and Killing test of ``tr(J) I - J``.

    Both reports passing is what the cofactor constructions rely on.
    """
    def companion(q):
        jm = J(q) @ chart.metric(q)
        return (np.trace(jm) * np.eye(chart.dim) - jm) @ chart.inverse_metric(q)

    return (is_conformal_killing(J, chart, samples, seed),
            is_killing(SymmetricTensorField(chart.dim, companion), chart, samples, seed))


def _one_form(K: SymmetricTensorField, V: ScalarField, chart: Chart, rel: float):
    """``omega_j = g_{jm} K^{ml} d_l V``."""
    return lambda q: chart.metric(q) @ K(q) @ V.grad(q, rel)


def characteristic_residual(K: SymmetricTensorField, V: ScalarField, chart: Chart, at) -> np.ndarray:
    """Exterior derivative ``R_ij = d_i omega_j - d_j omega_i`` of ``omega = K dV``.

    This is the characteristic (Bertrand-Darboux) equation; separable pairs
    give zero.
    """
    _check_dim(K, chart)
    at = chart.check(at)
    if V.gradient is not None:
        jac = fd_gradient(_one_form(K, V, chart, FD_REL_STEP), at)
    else:
        jac = fd_gradient(_one_form(K, V, chart, FD_NESTED_STEP), at, FD_NESTED_STEP)
    return jac - jac.T


def integrate_potential(K: SymmetricTensorField, V: ScalarField, chart: Chart, base, target,
                        tol: float = KILLING_TOL, check_points: int = 8) -> float:
    """Line integral of ``K dV`` from ``base`` to ``target`` on a straight segment.

    Raises :class:`NotClosedError` when the characteristic residual exceeds
    ``tol`` somewhere on the segment.
    """
    _check_dim(K, chart)
    base, target = chart.check(base), chart.check(target)
    seg = target - base
    for s in np.linspace(0.0, 1.0, check_points):
        q = base + s * seg
        r = np.max(np.abs(characteristic_residual(K, V, chart, q)))
        if r > tol:
            raise NotClosedError(f"K dV is not closed at {q}: residual {r:.3e}")
    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
    omega = _one_form(K, V, chart, FD_REL_STEP)
    total = 0.0
    for x, w in zip(nodes, weights):
        q = base + 0.5 * (x + 1.0) * seg
        total += w * float(omega(q) @ seg)
    return 0.5 * total


def integral_potential_field(K: SymmetricTensorField, V: ScalarField, chart: Chart, base) -> ScalarField:
    """``V_K`` with ``dV_K = K dV`` normalised to vanish at ``base``.

    The gradient is analytic (it is the one-form itself); values are path
    integrals and are only meaningful when the pair is separable.
    """
    base = chart.check(base)

    def value(q):
        return integrate_potential(K, V, chart, base, q, tol=np.inf, check_points=1)

    return ScalarField(value, _one_form(K, V, chart, FD_REL_STEP))


def two_center_potential(c: float, axis: int = 0, strength: float = 1.0, omega: float = 0.0) -> ScalarField:
    """``-s (1/r_+ + 1/r_-) + omega^2 |x|^2 / 2`` with centres at the foci of
    :func:`elliptic_l_tensor` ``(c, axis)``; separable in that elliptic web."""
    focus = np.zeros(2)
    focus[1 - axis] = float(c)

    def value(q):
        rp, rm = np.linalg.norm(q - focus), np.linalg.norm(q + focus)
        if min(rp, rm) < 1e-12:
            raise DomainError("two-centre potential evaluated at a centre")
        return -strength * (1 / rp + 1 / rm) + 0.5 * omega ** 2 * float(q @ q)

    def grad(q):
        dp, dm = q - focus, q + focus
        return strength * (dp / np.linalg.norm(dp) ** 3 + dm / np.linalg.norm(dm) ** 3) + omega ** 2 * q

    return ScalarField(value, grad)
