"""Coordinate charts on flat configuration spaces.

Every chart carries the point map to Cartesian coordinates, its inverse, the
Jacobian ``dx/dq`` and the contravariant metric ``g^{jl}``.  Points closer
than ``DOMAIN_MARGIN`` to a coordinate degeneracy are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SingularError
from .fields import fd_gradient

DOMAIN_MARGIN = 1e-8

PointMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Chart:
    name: str
    dim: int
    to_cartesian: Optional[PointMap]
    from_cartesian: Optional[PointMap]
    domain_predicate: Callable[[np.ndarray], bool]
    sample_low: np.ndarray
    sample_high: np.ndarray
    jacobian_fn: Optional[PointMap] = None
    inverse_metric_fn: Optional[PointMap] = None
    params: dict = field(default_factory=dict)

    def contains(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return q.shape == (self.dim,) and bool(np.all(np.isfinite(q))) and bool(self.domain_predicate(q))

    def check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if not self.contains(q):
            raise DomainError(f"point {q} outside the domain of chart {self.name!r}")
        return q

    def jacobian(self, q) -> np.ndarray:
        """Matrix ``J[a, j] = d x^a / d q^j``."""
        q = np.asarray(q, dtype=float)
        if self.jacobian_fn is not None:
            return np.asarray(self.jacobian_fn(q), dtype=float)
        if self.to_cartesian is None:
            raise SingularError(f"chart {self.name!r} has no Cartesian map")
        return fd_gradient(self.to_cartesian, q).T

    def inverse_metric(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.inverse_metric_fn is not None:
            return np.asarray(self.inverse_metric_fn(q), dtype=float)
        jac = self.jacobian(q)
        try:
            return np.linalg.inv(jac.T @ jac)
        except np.linalg.LinAlgError as exc:
            raise SingularError(f"degenerate metric at {q}") from exc

    def metric(self, q) -> np.ndarray:
        return np.linalg.inv(self.inverse_metric(q))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` domain points uniformly from the chart's sampling box."""
        out = []
        while len(out) < n:
            q = rng.uniform(self.sample_low, self.sample_high)
            if self.contains(q):
                out.append(q)
        return np.array(out)


def cartesian(dim: int = 2) -> Chart:
    eye = np.eye(dim)
    return Chart(
        name=f"cartesian{dim}", dim=dim,
        to_cartesian=lambda q: np.array(q, dtype=float),
        from_cartesian=lambda x: np.array(x, dtype=float),
        domain_predicate=lambda q: True,
        sample_low=-2.0 * np.ones(dim), sample_high=2.0 * np.ones(dim),
        jacobian_fn=lambda q: eye, inverse_metric_fn=lambda q: eye,
    )


def polar() -> Chart:
    """(r, theta) with theta in (-pi, pi]."""
    return Chart(
        name="polar", dim=2,
        to_cartesian=lambda q: np.array([q[0] * np.cos(q[1]), q[0] * np.sin(q[1])]),
        from_cartesian=lambda x: np.array([np.hypot(x[0], x[1]), np.arctan2(x[1], x[0])]),
        domain_predicate=lambda q: q[0] > DOMAIN_MARGIN and -np.pi < q[1] <= np.pi,
        sample_low=np.array([0.2, -3.0]), sample_high=np.array([3.0, 3.0]),
        jacobian_fn=lambda q: np.array([[np.cos(q[1]), -q[0] * np.sin(q[1])],
                                        [np.sin(q[1]), q[0] * np.cos(q[1])]]),
        inverse_metric_fn=lambda q: np.diag([1.0, 1.0 / q[0] ** 2]),
    )


def cylindrical() -> Chart:
    """(r, psi, z) about the z axis, psi in (-pi, pi]."""
    def jac(q):
        r, psi, _ = q
        c, s = np.cos(psi), np.sin(psi)
        return np.array([[c, -r * s, 0.0], [s, r * c, 0.0], [0.0, 0.0, 1.0]])

    return Chart(
        name="cylindrical", dim=3,
        to_cartesian=lambda q: np.array([q[0] * np.cos(q[1]), q[0] * np.sin(q[1]), q[2]]),
        from_cartesian=lambda x: np.array([np.hypot(x[0], x[1]), np.arctan2(x[1], x[0]), x[2]]),
        domain_predicate=lambda q: q[0] > DOMAIN_MARGIN and -np.pi < q[1] <= np.pi,
        sample_low=np.array([0.2, -3.0, -2.0]), sample_high=np.array([3.0, 3.0, 2.0]),
        jacobian_fn=jac,
        inverse_metric_fn=lambda q: np.diag([1.0, 1.0 / q[0] ** 2, 1.0]),
    )


def parabolic(sign: int = 1) -> Chart:
    """Parabolic coordinates (lam1, lam2) with lam1 > 0 > lam2.

    Cartesian point: ``x1 = lam1 + lam2``, ``x2 = sign * 2 sqrt(-lam1 lam2)``,
    so that ``x2**2 = -4 lam1 lam2``.  The chart covers the half plane
    ``sign * x2 > 0``.
    """
    sign = 1 if sign >= 0 else -1

    def to_cart(q):
        return np.array([q[0] + q[1], sign * 2.0 * np.sqrt(-q[0] * q[1])])

    def from_cart(x):
        rho = np.hypot(x[0], x[1])
        return np.array([0.5 * (x[0] + rho), 0.5 * (x[0] - rho)])

    def jac(q):
        l1, l2 = q
        x2 = sign * 2.0 * np.sqrt(-l1 * l2)
        return np.array([[1.0, 1.0], [-2.0 * l2 / x2, -2.0 * l1 / x2]])

    def inv_metric(q):
        l1, l2 = q
        d = l1 - l2
        return np.diag([l1 / d, -l2 / d])

    return Chart(
        name="parabolic", dim=2, to_cartesian=to_cart, from_cartesian=from_cart,
        domain_predicate=lambda q: q[0] > DOMAIN_MARGIN and q[1] < -DOMAIN_MARGIN,
        sample_low=np.array([0.1, -2.0]), sample_high=np.array([2.0, -0.1]),
        jacobian_fn=jac, inverse_metric_fn=inv_metric, params={"sign": sign},
    )


def elliptic(c: float, sign: int = 1) -> Chart:
    """Confocal elliptic coordinates (u, v), foci at (+-c, 0).

    ``x = u v / c``, ``y = sign * sqrt((u^2 - c^2)(c^2 - v^2)) / c`` with
    ``u >= c >= |v|``; ``u^2 - v^2`` is the product of the focal distances.
    """
    c = float(c)
    if c <= 0:
        raise ValueError("focus parameter must be positive")
    sign = 1 if sign >= 0 else -1

    def to_cart(q):
        u, v = q
        return np.array([u * v / c, sign * np.sqrt((u * u - c * c) * (c * c - v * v)) / c])

    def from_cart(x):
        rp = np.hypot(x[0] - c, x[1])
        rm = np.hypot(x[0] + c, x[1])
        return np.array([0.5 * (rp + rm), 0.5 * (rm - rp)])

    def jac(q):
        u, v = q
        a, b = u * u - c * c, c * c - v * v
        y = sign * np.sqrt(a * b) / c
        return np.array([[v / c, u / c], [u * b / (c * c * y), -v * a / (c * c * y)]])

    def inv_metric(q):
        u, v = q
        d = u * u - v * v
        return np.diag([(u * u - c * c) / d, (c * c - v * v) / d])

    return Chart(
        name="elliptic", dim=2, to_cartesian=to_cart, from_cartesian=from_cart,
        domain_predicate=lambda q: q[0] > c + DOMAIN_MARGIN and abs(q[1]) < c - DOMAIN_MARGIN,
        sample_low=np.array([1.05 * c, -0.95 * c]), sample_high=np.array([3.0 * c + 2.0, 0.95 * c]),
        jacobian_fn=jac, inverse_metric_fn=inv_metric, params={"c": c, "sign": sign},
    )


CHARTS: dict[str, Callable[..., Chart]] = {
    "cartesian": cartesian,
    "polar": polar,
    "cylindrical": cylindrical,
    "parabolic": parabolic,
    "elliptic": elliptic,
}


def get_chart(name: str, **params) -> Chart:
    try:
        factory = CHARTS[name]
    except KeyError:
        raise KeyError(f"unknown chart {name!r}; known: {sorted(CHARTS)}") from None
    return factory(**params)
