import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sepcert.charts import cartesian, cylindrical, polar
from sepcert.errors import DegenerateEigenvaluesWarning, DomainError, NotClosedError
from sepcert.fields import ScalarField, SymmetricTensorField, identity_tensor
from sepcert.killing import (LTensorCandidate, benenti_hierarchy, characteristic_residual, elliptic_l_tensor,
                             integral_potential_field, integrate_potential, is_conformal_killing, is_killing,
                             is_special_conformal, nijenhuis_torsion, probe_points, two_center_potential)
from sepcert.observables import poisson_bracket, quadratic_observable

x, y = sp.symbols("x y")
PLANE = cartesian(2)


def _tensor(matrix):
    return SymmetricTensorField.from_expr(matrix, [x, y])


# --- hierarchy ------------------------------------------------------------------


def test_hierarchy_starts_with_identity():
    K = benenti_hierarchy(elliptic_l_tensor(1.0))
    np.testing.assert_array_equal(K[0]([0.3, 0.4]), np.eye(2))


def test_hierarchy_of_diagonal_l_swaps_entries():
    L = LTensorCandidate(_tensor([[2 + x ** 2, 0], [0, -1 - y ** 2]]), PLANE)
    K1 = benenti_hierarchy(L)[1]
    q = np.array([0.5, 0.7])
    np.testing.assert_allclose(K1(q), np.diag([-1 - q[1] ** 2, 2 + q[0] ** 2]), atol=1e-14)


@pytest.mark.parametrize("axis", [0, 1])
def test_elliptic_hierarchy_is_killing_and_commutes_with_l(axis):
    L = elliptic_l_tensor(0.8, axis)
    Ks = benenti_hierarchy(L)
    for K in Ks:
        assert is_killing(K, PLANE, samples=100, seed=3).passed
    for q in PLANE.sample(np.random.default_rng(0), 30):
        lm = L.mixed(q)
        for K in Ks:
            comm = K(q) @ lm.T - lm @ K(q)
            assert np.linalg.norm(comm) < 1e-8 * max(1.0, np.linalg.norm(lm))


def test_elliptic_hierarchy_geodesic_bracket_at_100_points():
    K1 = benenti_hierarchy(elliptic_l_tensor(1.2))[1]
    from sepcert.observables import kinetic_observable
    H0, H1 = kinetic_observable(PLANE), quadratic_observable(K1)
    for q in PLANE.sample(np.random.default_rng(1), 100):
        assert poisson_bracket(H0, H1, q).max_abs() < 1e-6


def test_hierarchy_tensors_independent():
    Ks = benenti_hierarchy(elliptic_l_tensor(1.0))
    flat = np.array([K([0.4, 1.1]).ravel() for K in Ks])
    s = np.linalg.svd(flat, compute_uv=False)
    assert s[-1] > 1e-6 * s[0]


def test_degenerate_l_warns_but_builds():
    L = LTensorCandidate(identity_tensor(2), PLANE)
    with pytest.warns(DegenerateEigenvaluesWarning):
        Ks = benenti_hierarchy(L)
    np.testing.assert_allclose(Ks[1]([0, 0]), np.eye(2))


def test_elliptic_axis_selects_focal_line():
    q = np.array([0.3, 0.5])
    c = 0.7
    K_y = benenti_hierarchy(elliptic_l_tensor(c, 0))[1](q)
    K_x = benenti_hierarchy(elliptic_l_tensor(c, 1))[1](q)
    lz = np.array([[q[1] ** 2, -q[0] * q[1]], [-q[0] * q[1], q[0] ** 2]])
    np.testing.assert_allclose(K_y, lz + np.diag([0, c * c]), atol=1e-14)
    np.testing.assert_allclose(K_x, lz + np.diag([c * c, 0]), atol=1e-14)


def test_l_tensor_simple_spectrum_on_probe():
    assert elliptic_l_tensor(1.0).has_simple_spectrum()
    pts = probe_points(PLANE, seed=4)
    assert pts.shape == (25, 2)


# --- torsion ----------------------------------------------------------------------


def test_torsion_of_identity_vanishes():
    assert np.abs(nijenhuis_torsion(LTensorCandidate(identity_tensor(2), PLANE), [0.2, 0.3])).max() == 0.0


def test_torsion_of_separated_diagonal_vanishes():
    L = LTensorCandidate(_tensor([[sp.sin(x) + 3, 0], [0, y ** 3]]), PLANE)
    for q in PLANE.sample(np.random.default_rng(2), 10):
        assert np.abs(nijenhuis_torsion(L, q)).max() < 1e-6


def test_torsion_of_rotation_like_field_nonzero():
    L = LTensorCandidate(SymmetricTensorField(2, lambda q: np.array([[q[0], q[1]], [q[1], -q[0]]])), PLANE)
    assert np.abs(nijenhuis_torsion(L, [1.0, 1.0])).max() > 1e-2


def test_elliptic_l_tensor_is_torsionless():
    L = elliptic_l_tensor(1.3)
    for q in probe_points(PLANE, seed=1):
        assert np.abs(nijenhuis_torsion(L, q)).max() < 1e-6


def test_torsion_is_antisymmetric():
    L = LTensorCandidate(_tensor([[x * y, x ** 2], [x ** 2, y ** 3 + x]]), PLANE)
    N = nijenhuis_torsion(L, [0.4, -0.6])
    np.testing.assert_allclose(N, -np.swapaxes(N, 1, 2), atol=1e-10)


# --- Killing and conformal Killing ------------------------------------------------


@pytest.mark.parametrize("chart", [PLANE, polar(), cylindrical()], ids=lambda c: c.name)
def test_metric_is_killing(chart):
    g = SymmetricTensorField(chart.dim, chart.inverse_metric)
    assert is_killing(g, chart, samples=20).passed


def test_non_killing_tensor_reports_residual():
    rep = is_killing(_tensor([[x, 0], [0, 0]]), PLANE, samples=10)
    assert not rep.passed
    assert rep.worst_residual == pytest.approx(0.5, rel=1e-6)


def test_killing_is_conformal_with_zero_factor():
    K1 = benenti_hierarchy(elliptic_l_tensor(1.0))[1]
    rep = is_conformal_killing(K1, PLANE)
    assert rep.passed
    assert max(np.abs(f).max() for f in rep.factors) < 1e-8


def test_l_tensor_is_conformal_killing_with_nonzero_factor():
    L = elliptic_l_tensor(1.0)
    rep = is_conformal_killing(L.tensor, PLANE, samples=20)
    assert rep.passed
    assert max(np.abs(f).max() for f in rep.factors) > 1e-3


def test_cubic_diagonal_not_conformal():
    rep = is_conformal_killing(_tensor([[x ** 3, 0], [0, 0]]), PLANE, samples=[[1.0, 1.0]])
    assert not rep.passed
    assert rep.worst_residual > 1e-2


def test_special_conformal_pair_for_l_tensor():
    conf, kill = is_special_conformal(elliptic_l_tensor(0.9).tensor, PLANE)
    assert conf.passed and kill.passed


# --- characteristic equation ------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3))
def test_metric_characteristic_residual_vanishes(a, b, s):
    V = ScalarField.from_expr(s * sp.sin(a * x) * sp.cos(y) + b * x ** 3 * y, [x, y])
    R = characteristic_residual(identity_tensor(2), V, PLANE, np.array([0.3, -0.4]))
    assert np.abs(R).max() < 1e-6


def test_separable_pair_has_vanishing_residual():
    c = 0.8
    K1 = benenti_hierarchy(elliptic_l_tensor(c, 1))[1]
    V = two_center_potential(c, 1, 1.3, 0.4)
    for q in PLANE.sample(np.random.default_rng(5), 20):
        if min(np.hypot(q[0] - c, q[1]), np.hypot(q[0] + c, q[1])) < 0.2:
            continue
        assert np.abs(characteristic_residual(K1, V, PLANE, q)).max() < 1e-6


def test_quadrupole_not_separable_with_elliptic_tensor():
    from sepcert.stackelfit import quadrupole_potential
    K1 = benenti_hierarchy(elliptic_l_tensor(np.sqrt(0.2), 1))[1]
    R = characteristic_residual(K1, quadrupole_potential(1.0, 0.1), PLANE, np.array([1.0, 0.5]))
    assert np.abs(R).max() > 1e-2


def test_characteristic_residual_outside_domain():
    with pytest.raises(DomainError):
        characteristic_residual(identity_tensor(2), ScalarField.const(1.0), polar(), [-1.0, 0.0])


# --- potential integration --------------------------------------------------------


def test_integrate_potential_identity_and_scaling():
    V = ScalarField.from_expr(x ** 2 * y + sp.exp(y), [x, y])
    a, b = np.array([0.1, -0.3]), np.array([1.2, 0.8])
    assert integrate_potential(identity_tensor(2), V, PLANE, a, b) == pytest.approx(V(b) - V(a), rel=1e-10)
    K = SymmetricTensorField.constant_matrix(2.5 * np.eye(2))
    assert integrate_potential(K, V, PLANE, a, b) == pytest.approx(2.5 * (V(b) - V(a)), rel=1e-10)


def test_integrate_potential_raises_when_not_closed():
    from sepcert.stackelfit import quadrupole_potential
    K1 = benenti_hierarchy(elliptic_l_tensor(0.5, 1))[1]
    with pytest.raises(NotClosedError):
        integrate_potential(K1, quadrupole_potential(1.0, 0.1), PLANE, [1.0, 1.0], [2.0, 0.5])


def test_integrate_potential_cylindrical_h3_term():
    # total angular momentum squared, (r p_z - z p_r)^2 + (1 + z^2/r^2) p_psi^2, acting on F(psi)/r^2
    r, psi, zz = sp.symbols("r psi z")
    F = sp.cos(3 * psi) + 2
    chart = cylindrical()
    K = SymmetricTensorField.from_expr([[zz ** 2, 0, -r * zz], [0, 1 + zz ** 2 / r ** 2, 0],
                                        [-r * zz, 0, r ** 2]], [r, psi, zz])
    V = ScalarField.from_expr(F / r ** 2, [r, psi, zz])
    expected = sp.lambdify([r, psi, zz], (1 + zz ** 2 / r ** 2) * F)
    base, target = np.array([1.0, 0.2, 0.1]), np.array([1.6, 0.9, -0.4])
    got = integrate_potential(K, V, chart, base, target)
    assert got == pytest.approx(expected(*target) - expected(*base), rel=1e-9)


def test_integral_potential_field_gradient_is_k_dv():
    c = 0.6
    K1 = benenti_hierarchy(elliptic_l_tensor(c, 0))[1]
    V = two_center_potential(c, 0, 1.0, 0.5)
    VK = integral_potential_field(K1, V, PLANE, [1.5, 1.5])
    q = np.array([1.2, 0.9])
    np.testing.assert_allclose(VK.grad(q), K1(q) @ V.grad(q), rtol=1e-12)
    assert VK([1.5, 1.5]) == 0.0
