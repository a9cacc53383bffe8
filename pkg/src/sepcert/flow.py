"""Adaptive Dormand-Prince 5(4) integration of Hamiltonian and Newton flows.

The integrators exist to check conservation claims, so they favour tight
local error control over long-time structure preservation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .charts import Chart
from .errors import DomainError, NonFiniteError, SepCertError
from .observables import MomentumPolynomial


class StepUnderflowError(SepCertError):
    """Adaptive step shrank below the allowed floor (usually a singularity)."""


# Dormand & Prince (1980) coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass
class Trajectory:
    """Sampled phase states; for Newton flows ``q`` is position, ``p`` velocity."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    def states(self):
        return zip(self.times, self.q, self.p)

    def to_csv(self, path, q_names: Optional[Sequence[str]] = None, p_names: Optional[Sequence[str]] = None):
        n = self.q.shape[1]
        q_names = q_names or [f"q{j + 1}" for j in range(n)]
        p_names = p_names or [f"p{j + 1}" for j in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *q_names, *p_names])
            for t, q, p in self.states():
                w.writerow([repr(float(t)), *map(lambda v: repr(float(v)), q), *map(lambda v: repr(float(v)), p)])


def _stages(rhs, valid, t, y, step, k):
    """Fill stages ``k[1:]`` in place; return the order-5 and order-4 updates."""
    for s in range(1, 7):
        y_stage = y + step * sum(a * k[j] for j, a in enumerate(_A[s]))
        if not valid(y_stage):
            raise DomainError("stage left the domain")
        k[s] = rhs(t + _C[s] * step, y_stage)
    y5 = y + step * sum(b * kk for b, kk in zip(_B5, k) if b)
    y4 = y + step * sum(b * kk for b, kk in zip(_B4, k) if b)
    return y5, y4


def dopri(rhs: Callable[[float, np.ndarray], np.ndarray], y0, t_end: float, rel_tol: float,
          valid: Callable[[np.ndarray], bool] = lambda y: True, t_eval=None,
          max_step: float = np.inf) -> tuple[np.ndarray, np.ndarray, dict]:
    """Integrate ``y' = rhs(t, y)`` from 0 to ``t_end``.

    The local error estimate is scaled by ``rel_tol * max(1, |y|)`` per
    component.  With ``t_eval`` the steps are clipped to land on each output
    time and only those states are returned.
    """
    if not 1e-12 <= rel_tol <= 1e-3:
        raise ValueError("rel_tol must lie in [1e-12, 1e-3]")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    y = np.asarray(y0, dtype=float).copy()
    t = 0.0
    outs = None if t_eval is None else list(np.asarray(t_eval, dtype=float))
    if outs is not None and (np.any(np.diff(outs) <= 0) or outs[0] < 0 or outs[-1] > t_end * (1 + 1e-12)):
        raise ValueError("t_eval must be increasing inside [0, t_end]")
    ts, ys = [], []
    if outs is None or outs[0] == 0.0:
        ts.append(0.0)
        ys.append(y.copy())
        if outs is not None:
            outs.pop(0)
    h_floor = 1e-14 * t_end
    f0 = rhs(t, y)
    scale = rel_tol * np.maximum(1.0, np.abs(y))
    d0, d1 = np.sqrt(np.mean((y / scale) ** 2)), np.sqrt(np.mean((f0 / scale) ** 2))
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h = min(h, 0.1 * t_end, max_step)
    accepted = rejected = 0
    k = [f0] + [None] * 6

    while t < t_end:
        target = t_end if not outs else outs[0]
        step = min(h, max_step)
        clipped = t + step >= target
        if clipped:
            step = target - t
        ok = True
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                y5, y4 = _stages(rhs, valid, t, y, step, k)
                scale = rel_tol * np.maximum(1.0, np.maximum(np.abs(y), np.abs(y5)))
                err = np.sqrt(np.mean(((y5 - y4) / scale) ** 2))
            if not np.isfinite(err) or not valid(y5):
                raise NonFiniteError("invalid step result")
        except (DomainError, NonFiniteError, FloatingPointError, ZeroDivisionError):
            ok, err = False, np.inf

        if ok and err <= 1.0:
            t = target if clipped else t + step
            y = y5
            k[0] = k[6]  # first-same-as-last
            accepted += 1
            if outs is None:
                ts.append(t)
                ys.append(y.copy())
            elif clipped and outs:
                ts.append(t)
                ys.append(y.copy())
                outs.pop(0)
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            # a clipped step says nothing about the largest acceptable step
            h = max(h, step * factor) if clipped else step * factor
        else:
            rejected += 1
            h = step * (0.25 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2))
            if h < h_floor:
                raise StepUnderflowError(f"step size underflow at t = {t:.6g}")
    return np.array(ts), np.array(ys), {"accepted": accepted, "rejected": rejected}


def _split(ys: np.ndarray, n: int):
    return ys[:, :n], ys[:, n:]


def integrate_hamiltonian(H: MomentumPolynomial, chart: Chart, q0, p0, t_end: float,
                          rel_tol: float = 1e-8, t_eval=None, max_step: float = np.inf) -> Trajectory:
    """Solve ``q' = dH/dp, p' = -dH/dq`` with the coefficients' gradients."""
    n = H.dim
    q0 = chart.check(q0)
    p0 = np.asarray(p0, dtype=float)

    def rhs(t, y):
        gq, gp = H.gradients(y[:n], y[n:])
        return np.concatenate([gp, -gq])

    ts, ys, stats = dopri(rhs, np.concatenate([q0, p0]), t_end, rel_tol,
                          valid=lambda y: chart.contains(y[:n]), t_eval=t_eval, max_step=max_step)
    q, p = _split(ys, n)
    return Trajectory(ts, q, p, stats)


@dataclass(frozen=True, eq=False)
class NewtonSystem:
    """Second-order system ``x'' = M(x)``."""

    dim: int
    force: Callable[[np.ndarray], np.ndarray]
    triangular: bool = False

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.force(np.asarray(x, dtype=float)), dtype=float)

    def triangularity_defect(self, points) -> float:
        """Largest ``|dM_i/dx_j|`` with ``j > i`` over the given points."""
        from .fields import fd_gradient

        worst = 0.0
        for x in np.atleast_2d(points):
            jac = fd_gradient(self, x).T  # jac[i, j] = dM_i / dx_j
            worst = max(worst, float(np.max(np.abs(np.triu(jac, 1)), initial=0.0)))
        return worst


def integrate_newton(system: NewtonSystem, x0, v0, t_end: float, rel_tol: float = 1e-8,
                     t_eval=None, max_step: float = np.inf) -> Trajectory:
    n = system.dim

    def rhs(t, y):
        return np.concatenate([y[n:], system(y[:n])])

    ts, ys, stats = dopri(rhs, np.concatenate([np.asarray(x0, float), np.asarray(v0, float)]),
                          t_end, rel_tol, t_eval=t_eval, max_step=max_step)
    q, p = _split(ys, n)
    return Trajectory(ts, q, p, stats)


def conservation_report(traj: Trajectory, observables: Sequence) -> list[float]:
    """Max of ``|F(t) - F(0)| / max(1, |F(0)|)`` along ``traj`` for each observable.

    Observables are :class:`MomentumPolynomial` or plain ``f(q, p)`` callables.
    """
    out = []
    for F in observables:
        vals = np.array([F(q, p) for q, p in zip(traj.q, traj.p)])
        out.append(float(np.max(np.abs(vals - vals[0])) / max(1.0, abs(vals[0]))))
    return out
