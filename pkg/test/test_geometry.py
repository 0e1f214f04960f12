import numpy as np
import pytest

from geometry import (
    JFamilySpec, StructureError, build_structure, metric_at, nabla_J, nabla_J_norm_sq,
    nabla_J_mixed_trace, q_density, check_trace_identities, curvature_scalars, sup_nabla_J,
    q_grid_average, finite_difference_nabla_J, standard_omega, a0_preset, probe_table
)

EPS = 0.4


def shear_theta(x):
    return 2 * np.pi * np.atleast_2d(x)[:, 0]


def shear_norm_sq(x, eps=EPS):
    # metric 2π(dx1² + dx2² + e^{-2f}dx3² + e^{2f}dx4²) with f = ε sin(2πx1)
    return 16 * np.pi * eps ** 2 * np.cos(shear_theta(x)) ** 2


def test_constant_structure_is_flat(flat_structure, rng):
    x = rng.random((10, 4))
    np.testing.assert_allclose(flat_structure.J(x), np.broadcast_to(flat_structure.family.J0, (10, 4, 4)))
    np.testing.assert_allclose(metric_at(flat_structure, x), np.broadcast_to(2 * np.pi * np.eye(4), (10, 4, 4)))
    assert np.all(nabla_J(flat_structure, x) == 0)
    assert np.all(q_density(flat_structure, x) == 0)


def test_structure_invariants(perturbed_structure, rng):
    x = rng.random((50, 4))
    j = perturbed_structure.J(x)
    omega = perturbed_structure.Omega
    assert np.max(np.abs(j @ j + np.eye(4))) <= 1e-12
    assert np.max(np.abs(np.swapaxes(j, -1, -2) @ omega @ j - omega)) <= 1e-11
    beta = metric_at(perturbed_structure, x)
    assert np.all(np.linalg.eigvalsh(beta)[:, 0] > 0)
    np.testing.assert_allclose(np.linalg.det(beta), np.linalg.det(omega), rtol=1e-10)
    np.testing.assert_allclose(perturbed_structure.J(x + np.array([1, 0, 0, 0])), j, atol=1e-12)


def test_build_reports_diagnostics(perturbed_structure):
    diag = perturbed_structure.diagnostics
    assert diag["square_residual"] <= 1e-12
    assert diag["beta_asymmetry"] <= 1e-11
    assert diag["min_beta_eigenvalue"] > 0


def test_non_symplectic_generator_rejected():
    with pytest.raises(StructureError, match="algebra defect"):
        build_structure(JFamilySpec(n=2, epsilon=0.3, A0=np.diag([1.0, 1.0, 0.0, 0.0])))


def test_non_integral_periods_rejected():
    with pytest.raises(StructureError, match="2πZ"):
        build_structure(JFamilySpec(n=2, Omega=standard_omega(2, 0.5)))


def test_missing_generator_rejected():
    with pytest.raises(StructureError, match="A0 is required"):
        JFamilySpec(n=2, epsilon=0.4)


def test_norm_matches_closed_form(perturbed_structure, rng):
    x = rng.random((25, 4))
    np.testing.assert_allclose(nabla_J_norm_sq(perturbed_structure, x), shear_norm_sq(x),
                               rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(nabla_J_mixed_trace(perturbed_structure, x),
                               nabla_J_norm_sq(perturbed_structure, x), atol=1e-10)


def test_norm_positive_where_wave_derivative_extremal(perturbed_structure):
    assert nabla_J_norm_sq(perturbed_structure, np.zeros(4)) == pytest.approx(16 * np.pi * EPS ** 2, rel=1e-10)


def test_q_density_closed_form(perturbed_structure, rng):
    x = rng.random((25, 4))
    q = q_density(perturbed_structure, x)
    assert np.all(q <= 0)
    np.testing.assert_allclose(q, -5.0 / 24.0 * shear_norm_sq(x), rtol=1e-9, atol=1e-10)


def test_q_arithmetic():
    assert -5.0 / 24.0 * 24.0 == pytest.approx(-5.0)


def test_trace_identities(perturbed_structure, rng):
    trace_res, v_res = check_trace_identities(perturbed_structure, rng.random((100, 4)), trials=100)
    assert trace_res <= 1e-10
    assert v_res <= 1e-10


@pytest.mark.parametrize("fixture_name", ["flat_structure", "surface_structure"])
def test_trace_identities_vanish_for_parallel_j(fixture_name, request, rng):
    s = request.getfixturevalue(fixture_name)
    trace_res, v_res = check_trace_identities(s, rng.random((20, s.dim)), trials=20)
    assert trace_res <= 1e-10
    assert v_res <= 1e-10


def test_surface_structure_is_parallel(surface_structure, rng):
    x = rng.random((30, 2))
    assert np.max(np.abs(nabla_J(surface_structure, x))) <= 1e-10


def test_curvature_lemma(perturbed_structure, rng):
    x = rng.random((20, 4))
    scalar, romega, residual = curvature_scalars(perturbed_structure, x)
    cos2 = np.cos(shear_theta(x)) ** 2
    np.testing.assert_allclose(scalar, -4 * np.pi * EPS ** 2 * cos2, atol=1e-8)
    np.testing.assert_allclose(romega, -8 * np.pi * EPS ** 2 * cos2, atol=1e-8)
    assert np.max(residual) <= 1e-7


def test_curvature_flat(flat_structure, rng):
    scalar, romega, residual = curvature_scalars(flat_structure, rng.random((5, 4)))
    assert np.max(np.abs(scalar)) == 0
    assert np.max(np.abs(romega)) == 0
    assert np.max(residual) == 0


def test_curvature_lemma_in_dimension_two(surface_structure, rng):
    x = rng.random((20, 2))
    scalar, romega, residual = curvature_scalars(surface_structure, x)
    assert np.max(np.abs(scalar)) > 1e-3
    np.testing.assert_allclose(romega, -2 * scalar, atol=1e-7)
    assert np.max(residual) <= 1e-7


@pytest.mark.parametrize("x", [np.zeros(4), np.array([0.1, 0.3, 0.7, 0.2]), np.array([0.85, 0.5, 0.05, 0.9])])
def test_analytic_jets_match_finite_differences(perturbed_structure, x):
    analytic = nabla_J(perturbed_structure, x)
    numeric = finite_difference_nabla_J(perturbed_structure, x)
    assert np.max(np.abs(analytic - numeric)) <= 1e-8


def test_mixed_generator_cross_validation(rng):
    s = build_structure(JFamilySpec(n=2, epsilon=0.15, wave_vector=[1, 0, 1, 0], A0=a0_preset("mixed", 2)))
    x = rng.random(4)
    assert np.max(np.abs(nabla_J(s, x) - finite_difference_nabla_J(s, x))) <= 1e-8
    trace_res, v_res = check_trace_identities(s, x, trials=50)
    assert max(trace_res, v_res) <= 1e-10
    assert curvature_scalars(s, x)[2] <= 1e-7


def test_sup_nabla_j(perturbed_structure, flat_structure):
    coarse = sup_nabla_J(perturbed_structure, 8)
    fine = sup_nabla_J(perturbed_structure, 16)
    assert coarse == pytest.approx(16 * np.pi * EPS ** 2, rel=1e-9)
    assert fine >= coarse
    assert abs(fine - coarse) / fine < 0.01
    assert sup_nabla_J(flat_structure, 8) == 0.0
    with pytest.raises(ValueError):
        sup_nabla_J(perturbed_structure, 4)


def test_q_grid_average(perturbed_structure):
    mean, values = q_grid_average(perturbed_structure, 8)
    assert mean == pytest.approx(-5.0 / 24.0 * 8 * np.pi * EPS ** 2, rel=1e-9)
    assert values.shape == (8 ** 4,)


def test_probe_table_columns(perturbed_structure, rng):
    table = probe_table(perturbed_structure, rng.random((3, 4)))
    assert set(table) >= {"normJ2", "q", "R", "Romega", "lemma_residual"}
    assert np.all(table["lemma_residual"] <= 1e-7)
