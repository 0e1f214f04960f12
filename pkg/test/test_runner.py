import numpy as np
import pytest

from analysis import extract_cluster
from experiment_spec import validate_experiment_spec
from runner import ExperimentRunner, TaskStatus, quasimode_criteria

KS = (4, 6, 8, 10)


def sample(k, index, q, r, mass=1.0, boundary=0.0, m2_power=1.0, m4_power=2.0):
    kappa = k + 1.0
    return {"k": k, "index": index, "q_x0": q, "r_k": r, "kappa": kappa, "mass": mass, "boundary": boundary,
            "localization": {2: 0.3 * kappa ** -m2_power, 4: 0.1 * kappa ** -m4_power}}


def healthy(overrides=None):
    """Point 0 sits at q = -1.5, point 1 at q = -0.1; r_k - q = 1/k at both."""
    rows = []
    for k in KS:
        for index, q in enumerate((-1.5, -0.1)):
            fields = {"r": q + 1.0 / k}
            fields.update((overrides or {}).get((k, index), {}))
            rows.append(sample(k, index, q, **fields))
    return rows


def test_healthy_samples_pass_every_criterion():
    criteria, details = quasimode_criteria(healthy(), [2, 4])
    assert all(criteria.values())
    assert details["rates"] == {"0": pytest.approx(1.0)}
    assert details["localization_slopes"]["0:2"] == pytest.approx(-1.0)
    assert details["localization_slopes"]["1:4"] == pytest.approx(-2.0)


@pytest.mark.parametrize("overrides,failed", [
    ({(10, 1): {"r": -1.6}}, "rayleigh_ordering"),
    ({(6, 1): {"mass": 0.9}}, "mass_concentration"),
    ({(k, 0): {"r": -1.0} for k in KS}, "rayleigh_rate"),
    ({(k, 1): {"m2_power": 2.0} for k in KS}, "localization_slope"),
    ({(k, 0): {"m4_power": 1.0} for k in KS}, "localization_slope"),
])
def test_each_criterion_can_fail(overrides, failed):
    criteria, _ = quasimode_criteria(healthy(overrides), [2, 4])
    assert [name for name, ok in criteria.items() if not ok] == [failed]


def test_wrapped_samples_are_left_out_of_slope_fits():
    rows = healthy({(k, 0): {"m2_power": 0.3, "boundary": 0.2} for k in (4, 6)})
    criteria, details = quasimode_criteria(rows, [2])
    assert criteria["localization_slope"]
    assert details["localization_slopes"]["0:2"] == pytest.approx(-1.0)


@pytest.fixture
def perturbed_runner(tmp_path):
    config = validate_experiment_spec({
        "name": "density-unit", "k_list": [4, 6], "tasks": ["spectrum", "density"],
        "structure": {"n": 2, "epsilon": 0.4, "wave_vector": [1, 0, 0, 0], "A0": "plane2-shear"},
        "density": {"grid_n": 4},
    })
    return ExperimentRunner(config, tmp_path)


def set_clusters(runner, means):
    for k, mean in zip((4, 6), means):
        values = np.concatenate([np.full(k * k, mean), [2.0 * k, 2.0 * k + 0.1]])
        runner.clusters[k] = extract_cluster(values, k, runner.structure)


def test_density_reports_clusters_that_stay_away_from_q(perturbed_runner):
    set_clusters(perturbed_runner, (-0.016, -0.02))
    result = perturbed_runner._density()
    assert result.status == TaskStatus.FAIL
    assert not result.criteria["delta_spread_share"]
    assert "stay away from the average of q" in result.details["verdict"]
    assert "cluster mean -0.0200" in result.message
    assert (perturbed_runner.output_dir / "density.csv").exists()


def test_density_reports_clusters_that_approach_q(perturbed_runner):
    set_clusters(perturbed_runner, (-0.7, -0.8))
    result = perturbed_runner._density()
    assert result.status == TaskStatus.PASS
    assert result.details["verdict"].startswith("cluster averages approach")
