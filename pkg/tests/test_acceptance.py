"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest

from sepcert.charts import cartesian
from sepcert.cofactor import check_cofactor, example_k_reference, example_system, example_tensor, tne_example_coords
from sepcert.errors import DomainError
from sepcert.fields import ScalarField, SymmetricTensorField
from sepcert.flow import conservation_report, integrate_hamiltonian
from sepcert.killing import (benenti_hierarchy, elliptic_l_tensor, integral_potential_field, is_killing,
                             two_center_potential)
from sepcert.observables import MomentumPolynomial, kinetic_observable, poisson_bracket, quadratic_observable
from sepcert.sepcurve import (HENON_HEILES_SPEC, SeparationCurveSpec, build_family, dispersionless_rhs,
                              henon_heiles_cartesian, henon_heiles_chart, sample_lambda)
from sepcert.stackelfit import FitRegion, SeparableFamily, compare_with_we, fit_family, quadrupole_potential
from sepcert.superint3 import POTENTIALS, drift_report, generic_rank, integrals

PLANE = cartesian(2)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {'PASS' if ok else 'FAIL'}  criterion {number} ({title}): {detail}")
        assert ok, detail
    return emit


def test_criterion_1_benenti_hierarchy(verdict):
    t0 = time.perf_counter()
    c = 1.0
    K0, K1 = benenti_hierarchy(elliptic_l_tensor(c))
    killing = [is_killing(K, PLANE, samples=100, seed=1) for K in (K0, K1)]
    V = two_center_potential(c, 0, 1.0, 0.5)
    V1 = integral_potential_field(K1, V, PLANE, [1.5, 1.5])
    zero = SymmetricTensorField.constant_matrix(np.zeros((2, 2)))
    H0 = kinetic_observable(PLANE) + quadratic_observable(zero, V)
    H1 = quadratic_observable(K1, V1)
    rng = np.random.default_rng(2024)
    worst, done = 0.0, 0
    while done < 100:
        q = PLANE.sample(rng, 1)[0]
        if min(np.hypot(q[0], q[1] - c), np.hypot(q[0], q[1] + c)) < 0.1:
            continue
        worst = max(worst, poisson_bracket(H0, H1, q).max_abs())
        done += 1
    elapsed = time.perf_counter() - t0
    kill = max(r.worst_residual for r in killing)
    ok = all(r.passed for r in killing) and worst < 1e-6 and elapsed < 10
    verdict(1, "Benenti hierarchy", ok,
            f"Killing residual {kill:.2e}, bracket {worst:.2e} < 1e-6 at 100 points, {elapsed:.1f}s < 10s")


def test_criterion_2_separation_curve(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    curve = bracket = 0.0
    for spec in (SeparationCurveSpec(2, 1, 4), SeparationCurveSpec(2, 0, 2), SeparationCurveSpec(3, 0, 3)):
        fam = build_family(spec)
        lams = sample_lambda(spec, rng, 200)
        mus = rng.normal(size=lams.shape)
        curve = max(curve, max(np.abs(fam.curve_residual(l, m)).max() for l, m in zip(lams, mus)))
        for lam in lams:
            for i, j in itertools.combinations(range(spec.n), 2):
                bracket = max(bracket, poisson_bracket(fam.hamiltonians[i], fam.hamiltonians[j], lam,
                                                       fam.chart).max_abs())
    elapsed = time.perf_counter() - t0
    ok = curve < 1e-8 and bracket < 1e-6 and elapsed < 30
    verdict(2, "separation curves", ok,
            f"curve identity {curve:.2e} < 1e-8, brackets {bracket:.2e} < 1e-6, {elapsed:.1f}s < 30s")


def test_criterion_3_henon_heiles(verdict):
    h1, h2 = henon_heiles_cartesian()
    chart = henon_heiles_chart()
    pts = chart.sample(np.random.default_rng(3), 100)
    form = 0.0
    for q in pts[:20]:
        got = h1.at(q)
        want = {(2, 0): 0.5, (0, 2): 0.5, (0, 0): q[0] ** 3 + 0.5 * q[0] * q[1] ** 2}
        form = max(form, max(abs(got.coeff(m) - want.get(m, 0.0)) for m in set(got.coeffs) | set(want)))
    bracket = max(poisson_bracket(h1, h2, q, chart).max_abs() for q in pts)
    verdict(3, "Henon-Heiles", form < 1e-8 and bracket < 1e-6,
            f"H1 coefficients {form:.2e} < 1e-8 at 20 points, bracket {bracket:.2e} < 1e-6 at 100 points")


def test_criterion_4_dispersionless(verdict):
    fam = build_family(HENON_HEILES_SPEC)
    x = np.linspace(-1, 1, 256)
    q1, q2 = 0.3 + 0.5 * x + 0.2 * x ** 2, 1.5 + 0.1 * x - 0.3 * x ** 3
    q1x, q2x = 0.5 + 0.4 * x, 0.1 - 0.9 * x ** 2
    rhs = dispersionless_rhs(fam, 2, x, np.array([q1, q2]), coords="cartesian")
    err = max(np.abs(rhs[0] - 0.5 * q2 * q2x).max(), np.abs(rhs[1] - (0.5 * q2 * q1x - q1 * q2x)).max())
    verdict(4, "dispersionless RHS", err < 1e-8, f"max error {err:.2e} < 1e-8 on 256 points")


def test_criterion_5_cofactor(verdict):
    res = check_cofactor(example_system(), example_tensor())
    diff = res.k_samples - np.array([example_k_reference(x) for x in res.grid])
    rms = float(np.sqrt(np.mean((diff - diff.mean()) ** 2)))
    fc = tne_example_coords((1.0, 0.0), (0.0, 0.0), t_end=10.0)
    ok = res.closedness_residual < 1e-6 and rms < 1e-8 and fc.u1_residual < 1e-6
    verdict(5, "cofactor example", ok,
            f"closedness {res.closedness_residual:.2e} < 1e-6, k RMS {rms:.2e} < 1e-8, "
            f"u1 residual {fc.u1_residual:.2e} < 1e-6")


INITIAL = {"calogero": (1.0, 0.0, -1.0), "wolfes": (1.0, 0.25, -1.0), "new": (1.0, 0.0, -1.0)}


def test_criterion_6_superintegrable_three_body(verdict):
    k = (1.0, 2.0, 3.0)
    rng = np.random.default_rng(6)
    form = drift = 0.0
    ranks = []
    for name in sorted(POTENTIALS):
        P = POTENTIALS[name](k)
        checked = 0
        while checked < 20:
            try:
                form = max(form, P.form_defect(rng.normal(size=3)))
                checked += 1
            except DomainError:
                continue
        d, _ = drift_report(P, INITIAL[name], (0.1, -0.2, 0.1), t_end=5.0, rel_tol=1e-8)
        drift = max(drift, max(d))
        ranks += generic_rank(integrals(P), rng, expected=4, points=20)
    ok = form < 1e-10 and drift < 1e-6 and min(ranks) == 4 and max(ranks) == 4
    verdict(6, "superintegrable 3-body", ok,
            f"form defect {form:.2e} < 1e-10, drift {drift:.2e} < 1e-6, ranks in [{min(ranks)}, {max(ranks)}] == 4")


@pytest.fixture(scope="module")
def quadrupole_fit():
    t0 = time.perf_counter()
    region = FitRegion(0.8, 2.5)
    V = quadrupole_potential(1.0, 0.1)
    res = fit_family(V, SeparableFamily("elliptic"), region, (math.sqrt(0.02), math.sqrt(0.6)))
    cmp_ = compare_with_we(V, res.fit, region, 1.0, 0.1)
    return res, cmp_, time.perf_counter() - t0


def test_criterion_7a_stackel_focus(verdict, quadrupole_fit):
    res, _, elapsed = quadrupole_fit
    rel = abs(res.param_squared - 0.2) / 0.2
    verdict("7a", "Stackel fit focus", rel < 0.05 and elapsed < 120,
            f"(c*)^2 = {res.param_squared:.4f}, relative error {rel:.3f} < 0.05, {elapsed:.1f}s < 120s")


def test_criterion_7b_stackel_we_form(verdict, quadrupole_fit):
    _, cmp_, elapsed = quadrupole_fit
    verdict("7b", "Stackel fit W_e form", cmp_.ratio < 10 and elapsed < 120,
            f"form RMS {cmp_.form_rms:.2e} = {cmp_.ratio:.2f} x projection floor {cmp_.floor:.2e} (< 10x)")


OSC = MomentumPolynomial(1, {(2,): 0.5, (0,): ScalarField(lambda q: 0.5 * q[0] ** 2, lambda q: np.array([q[0]]))})


def test_criterion_8_integrator(verdict):
    line = cartesian(1)
    rel_tol, t_end = 1e-10, 100.0
    traj = integrate_hamiltonian(OSC, line, [1.0], [0.0], t_end, rel_tol)
    drift = conservation_report(traj, [OSC])[0]
    half = conservation_report(integrate_hamiltonian(OSC, line, [1.0], [0.0], t_end, rel_tol / 2), [OSC])[0]
    back = integrate_hamiltonian(OSC, line, traj.q[-1], -traj.p[-1], t_end, rel_tol)
    rev = max(abs(back.q[-1][0] - 1.0), abs(back.p[-1][0]))
    ratio = drift / half
    ok = drift < 1e-8 and ratio >= 4.0 and rev < 10 * rel_tol * t_end
    verdict(8, "integrator order and reversibility", ok,
            f"energy drift {drift:.2e} < 1e-8, halving ratio {ratio:.2f} >= 4, "
            f"reversal error {rev:.2e} < {10 * rel_tol * t_end:.0e}")
