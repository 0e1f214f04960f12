import math

import numpy as np
import pytest

from analysis import (
    QuasimodeError, coherent_state, coherent_state_for, count_check, density_compare, expected_count,
    extract_cluster, landau_levels, localization_check, loglog_slope, mass_within_radius, project_onto_cluster,
    rayleigh_quotient, residual_norm, snap_to_grid
)
from analysis.quasimodes import _distance_sq
from geometry import JFamilySpec, build_structure, metric_at
from quantization import build_operator, lowest_eigenpairs


@pytest.fixture
def flat_surface():
    return build_structure(JFamilySpec(n=1))


def test_landau_levels():
    assert landau_levels(2, 2, 12).tolist() == [0.0] * 4 + [4.0] * 8
    assert landau_levels(3, 1, 7).tolist() == [0.0] * 3 + [6.0] * 3 + [12.0]
    assert len(landau_levels(1, 2, 0)) == 0


def test_expected_count(flat_structure, flat_surface):
    assert [expected_count(k, flat_structure) for k in (1, 2, 3, 4)] == [1, 4, 9, 16]
    assert expected_count(5, flat_surface) == 5


def test_extract_cluster_from_landau_spectrum(flat_structure):
    values = landau_levels(2, 2, 20) + np.linspace(0, 1e-3, 20)
    report = extract_cluster(values, 2, flat_structure)
    assert not report.flagged
    assert report.count == report.expected == 4
    assert report.gap == pytest.approx(4.0, abs=1e-2)
    assert report.gap_lower > np.max(report.eigenvalues) + 1.0
    assert report.second_cluster_center == pytest.approx(4.0, abs=1e-2)
    assert report.moments[2] == pytest.approx(np.mean(report.eigenvalues ** 2))
    assert report.to_dict()["n_k"] == 4
    assert len(report.rows()[0]) == 13


def test_truncated_spectrum_is_flagged(flat_structure):
    report = extract_cluster([0.0, 0.01, 0.02, 0.03], 2, flat_structure)
    assert report.flagged
    assert "below k/2" in report.flag_reason
    report = extract_cluster([0.0], 2, flat_structure)
    assert report.flagged
    assert report.gap_lower is None


def test_gap_is_measured_relative_to_k(flat_structure):
    values = [0.0, 0.1, 0.2, 0.3, 1.9, 2.0]
    report = extract_cluster(values, 4, flat_structure)
    assert report.count == 4
    assert report.relative_gap == pytest.approx(0.4)
    assert report.flagged
    assert "relative gap 0.4000" in report.flag_reason
    accepted = extract_cluster(values, 2, flat_structure)
    assert accepted.relative_gap == pytest.approx(0.8)
    assert not accepted.flagged
    assert accepted.to_dict()["relative_gap"] == pytest.approx(0.8)


def test_count_check_on_landau_spectra(flat_structure):
    reports = [extract_cluster(landau_levels(k, 2, 3 * k * k + 1), k, flat_structure) for k in (1, 2, 3, 4)]
    summary = count_check(reports)
    assert summary["n_k"] == [1, 4, 9, 16]
    assert summary["passed"]
    assert summary["slope"] == pytest.approx(2.0, abs=1e-12)


def test_count_check_reports_mismatch(flat_structure):
    reports = [extract_cluster(landau_levels(k, 2, 3 * k * k + 1), k, flat_structure) for k in (1, 2, 3)]
    reports[1].count = 5
    summary = count_check(reports)
    assert not summary["passed"]
    assert summary["mismatches"] == [2]
    with pytest.raises(ValueError):
        count_check(reports[:2])


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
    assert loglog_slope([4, 8], [0.5, 0.25]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        loglog_slope([1], [1])
    with pytest.raises(ValueError):
        loglog_slope([0, 1], [1, 2])


def test_density_compare_kahler(flat_structure):
    report = extract_cluster(landau_levels(2, 2, 13), 2, flat_structure)
    comparison = density_compare(report, flat_structure, grid_n=4)
    assert all(delta == 0.0 for delta in comparison.deltas.values())
    assert comparison.q_spread == 0.0


def test_density_compare_reference_is_average_of_q(perturbed_structure):
    cluster = np.array([-0.9, -0.8, -0.7, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    report = extract_cluster(np.concatenate([cluster, [8.0, 8.1]]), 4, perturbed_structure)
    fset = {"one": np.ones_like, "t": lambda t: t}
    comparison = density_compare(report, perturbed_structure, fset=fset, grid_n=8)
    assert comparison.deltas["one"] == 0.0
    eps = perturbed_structure.family.epsilon
    assert comparison.reference_averages["t"] == pytest.approx(-5 * math.pi / 3 * eps ** 2, rel=1e-8)
    assert comparison.deltas["t"] == pytest.approx(abs(np.mean(cluster) + 5 * math.pi / 3 * eps ** 2))
    assert comparison.q_spread == pytest.approx(10 * math.pi / 3 * eps ** 2, rel=1e-8)
    assert comparison.rows()[0][:2] == [4, "one"]


def test_density_compare_refuses_flagged_cluster(flat_structure):
    report = extract_cluster([0.0], 2, flat_structure)
    with pytest.raises(ValueError, match="flagged"):
        density_compare(report, flat_structure, grid_n=4)


def test_surface_cluster_from_computed_spectrum(flat_surface):
    op = build_operator(flat_surface, 3, 18)
    spectrum = lowest_eigenpairs(op, count=8)
    report = extract_cluster(spectrum, 3, flat_surface)
    assert not report.flagged
    assert report.count == 3
    assert np.all(np.abs(report.eigenvalues) < 0.5)


def test_snap_to_grid():
    assert np.allclose(snap_to_grid([0.26, 0.99], 4), [0.25, 0.0])


def test_coherent_state_normalization(flat_surface):
    psi = coherent_state(flat_surface, 4, [0.25, 0.5], 24)
    assert abs(np.linalg.norm(psi.vector) - 1.0) <= 1e-12
    assert psi.kappa == 4.5
    assert psi.normalization == pytest.approx(math.sqrt(psi.kappa / (2 * math.pi)), rel=2e-2)
    assert mass_within_radius(psi, flat_surface) >= 0.99
    assert mass_within_radius(psi, flat_surface, radius=0.2) < 0.5


def test_coherent_state_refusals(flat_surface):
    with pytest.raises(QuasimodeError, match="e-folding"):
        coherent_state(flat_surface, 4, [0.25, 0.5], 12)
    with pytest.raises(QuasimodeError, match="grid"):
        coherent_state(flat_surface, 4, [0.26, 0.5], 24)
    with pytest.raises(QuasimodeError):
        coherent_state(flat_surface, 4, [0.25], 24)


def test_kahler_rayleigh_quotient_is_small(flat_surface):
    op = build_operator(flat_surface, 4, 24)
    psi = coherent_state_for(op, [0.5, 0.25])
    assert abs(rayleigh_quotient(op, psi)) < 0.2
    assert residual_norm(op, psi, psi.x0) < 1.0


def test_rayleigh_quotient_is_gauge_independent(flat_surface):
    x0 = [0.5, 0.25]
    values = []
    for center in ([0.0, 0.0], [0.3, 0.55]):
        op = build_operator(flat_surface, 4, 24, center=np.array(center))
        values.append(rayleigh_quotient(op, coherent_state_for(op, x0)))
    assert values[0] == pytest.approx(values[1], abs=1e-9)


def test_mismatched_operator_rejected(flat_surface):
    op = build_operator(flat_surface, 4, 24)
    psi = coherent_state(flat_surface, 4, [0.5, 0.25], 24, center=np.array([0.1, 0.0]))
    with pytest.raises(ValueError, match="does not match"):
        rayleigh_quotient(op, psi)


def test_residual_of_eigenvector_is_eigenvalue(flat_surface):
    op = build_operator(flat_surface, 2, 12)
    values, vectors = np.linalg.eigh(op.matvec(np.eye(op.size, dtype=complex)))
    assert residual_norm(op, vectors[:, 2], [0.0, 0.0]) == pytest.approx(abs(values[2]), abs=1e-8)


def test_localization_moments(flat_surface):
    psi = coherent_state(flat_surface, 8, [0.5, 0.5], 36)
    assert abs(localization_check(psi, 1, flat_surface)) < 1e-9
    assert localization_check(psi, 2, flat_surface) == pytest.approx(1 / (math.pi * psi.kappa), rel=2e-2)
    sigma_sq = 1 / (2 * math.pi * psi.kappa)
    assert localization_check(psi, 4, flat_surface) == pytest.approx(6 * sigma_sq ** 2, rel=5e-2)
    with pytest.raises(ValueError):
        localization_check(psi, 5, flat_surface)


def test_kahler_rayleigh_quotient_at_high_k(flat_surface):
    op = build_operator(flat_surface, 8, 30)
    psi = coherent_state_for(op, [0.5, 0.5])
    assert abs(rayleigh_quotient(op, psi)) <= 0.1


def test_distance_matches_midpoint_metric(perturbed_structure, rng):
    x0 = np.array([0.1, 0.5, 0.5, 0.5])
    jets = perturbed_structure.beta_jets(x0)
    y = 1e-3 * rng.standard_normal((6, 4))
    midpoint = np.einsum('pi,pij,pj->p', y, metric_at(perturbed_structure, x0 + 0.5 * y), y)
    assert np.allclose(_distance_sq(y, jets.value, jets.first), midpoint, rtol=1e-4)
    far = rng.uniform(-1, 1, (50, 4))
    assert np.all(_distance_sq(far, jets.value, jets.first) > 0)


def test_perturbed_cluster_count_on_coarse_grid(perturbed_structure):
    op = build_operator(perturbed_structure, 2, 12)
    report = extract_cluster(lowest_eigenpairs(op, count=12), 2, perturbed_structure)
    assert not report.flagged
    assert report.count == report.expected == 4


def test_projected_rayleigh_quotient_lies_in_cluster(perturbed_structure):
    op = build_operator(perturbed_structure, 2, 14)
    spectrum = lowest_eigenpairs(op, count=12)
    report = extract_cluster(spectrum, 2, perturbed_structure)
    psi = coherent_state_for(op, [0.0, 0.5, 0.5, 0.5])
    projected = project_onto_cluster(psi, spectrum.eigenvectors[:, :report.count])
    assert np.linalg.norm(projected) > 0
    r = rayleigh_quotient(op, projected)
    assert np.min(report.eigenvalues) - 1e-6 <= r <= np.max(report.eigenvalues) + 1e-6


def test_kahler_coherent_state_lies_in_lowest_cluster(flat_surface):
    op = build_operator(flat_surface, 4, 24)
    spectrum = lowest_eigenpairs(op, count=8)
    psi = coherent_state_for(op, [0.5, 0.25])
    assert np.linalg.norm(project_onto_cluster(psi, spectrum.eigenvectors[:, :4])) >= 0.98


def test_perturbed_localization_tightens_with_k(perturbed_structure):
    x0 = [0.0, 0.5, 0.5, 0.5]
    low = localization_check(coherent_state(perturbed_structure, 2, x0, 24), 2, perturbed_structure)
    high = localization_check(coherent_state(perturbed_structure, 8, x0, 24), 2, perturbed_structure)
    assert high < 0.75 * low
