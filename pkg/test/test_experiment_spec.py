import math
import os

import numpy as np
import pytest
import yaml

from analysis import snap_to_grid
from analysis.quasimodes import POINTS_PER_EFOLDING
from experiment_spec import Task, collect_violations, validate_experiment_spec
from geometry import build_structure, metric_at, q_density
from quantization import resolution_bound

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "experiments")


def load(name):
    with open(os.path.join(CONFIG_DIR, name)) as f:
        return yaml.safe_load(f)


def minimal(**overrides):
    spec = {"name": "unit", "k_list": [1, 2, 3], "tasks": ["spectrum"]}
    spec.update(overrides)
    return spec


@pytest.mark.parametrize("name", ["kahler-baseline.yaml", "perturbed.yaml"])
def test_shipped_configs_are_valid(name):
    assert collect_violations(load(name)) == []
    config = validate_experiment_spec(load(name))
    assert config.tasks


def test_perturbed_config_builds_non_kahler_structure():
    config = validate_experiment_spec(load("perturbed.yaml"))
    s = build_structure(config.structure.family_spec())
    assert not s.is_constant
    assert s.n == 2


def test_defaults():
    config = validate_experiment_spec(minimal())
    assert config.solver.tol == 1e-8
    assert config.solver.block_size == 8
    assert config.solver.method.value == "lanczos"
    assert config.quasimode.N is None
    assert config.grid_size(4) == resolution_bound(4)
    assert config.output_dir is None


def test_explicit_grid():
    config = validate_experiment_spec(minimal(grid={"N": 20}))
    assert config.grid_size(1) == 20


def test_tasks_run_in_dependency_order():
    config = validate_experiment_spec(minimal(tasks=["density", "spectrum", "geometry-check"]))
    assert config.ordered_tasks() == [Task.GEOMETRY_CHECK, Task.SPECTRUM, Task.DENSITY]


def test_empty_k_list_rejected():
    violations = collect_violations(minimal(k_list=[]))
    assert any(v.startswith("k_list") for v in violations)
    with pytest.raises(ValueError, match="Invalid experiment specification"):
        validate_experiment_spec(minimal(k_list=[]))


@pytest.mark.parametrize("k_list", [[2, 1], [1, 1], [0, 1]])
def test_k_list_must_increase_from_one(k_list):
    assert any(v.startswith("k_list") for v in collect_violations(minimal(k_list=k_list)))


def test_missing_a0_with_deformation():
    violations = collect_violations(minimal(structure={"n": 2, "epsilon": 0.4}))
    assert violations == ["structure.A0: required when epsilon != 0"]


def test_grid_below_resolution_rule():
    violations = collect_violations(minimal(k_list=[1, 4], grid={"N": 10}))
    assert len(violations) == 1
    assert "N >= 6√k" in violations[0]


def test_quasimode_grid_below_resolution_rule():
    violations = collect_violations(minimal(k_list=[1, 4], quasimode={"N": 10}))
    assert violations == ["quasimode.N: 10 violates the rule N >= 6√k = 12 for k = 4"]


def test_perturbed_quasimode_centres_resolve_at_largest_k():
    config = validate_experiment_spec(load("perturbed.yaml"))
    s = build_structure(config.structure.family_spec())
    N, k = config.quasimode.N, max(config.k_list)
    kappa = k + s.n / 2
    for x0 in config.x0_list:
        assert np.allclose(snap_to_grid(x0, N), x0)
        width = 2 / math.sqrt(kappa * np.max(np.linalg.eigvalsh(metric_at(s, np.array(x0)))))
        assert width * N >= POINTS_PER_EFOLDING
    q = [float(q_density(s, np.array(x0))) for x0 in config.x0_list]
    assert max(q) == pytest.approx(0.0, abs=1e-12)
    assert max(q) - min(q) > 1.5


def test_all_field_violations_listed():
    violations = collect_violations({"name": "unit", "k_list": [], "tasks": ["nope"]})
    assert len(violations) == 2
    assert any(v.startswith("tasks") for v in violations)


def test_all_cross_field_violations_listed():
    violations = collect_violations(minimal(
        structure={"n": 2, "epsilon": 0.4, "wave_vector": [1, 0]},
        tasks=["quasimode"], grid={"N": 8}, x0_list=[]))
    keys = {v.split(":")[0] for v in violations}
    assert keys == {"tasks", "x0_list", "structure.A0", "structure.wave_vector", "grid.N"}


def test_a0_checks():
    assert any("preset" in v for v in collect_violations(minimal(structure={"A0": "twist"})))
    assert any("n >= 2" in v for v in collect_violations(
        minimal(structure={"n": 1, "epsilon": 0.1, "A0": "plane2-shear"})))
    assert any("4x4" in v for v in collect_violations(
        minimal(structure={"n": 2, "epsilon": 0.1, "A0": [[0, 1], [1, 0]]})))


def test_x0_points_checked():
    violations = collect_violations(minimal(tasks=["spectrum", "quasimode"],
                                            x0_list=[[0.5, 0.5, 0.5], [0.5, 1.0, 0.0, 0.2]]))
    assert violations == ["x0_list[0]: must have length 2n = 4",
                          "x0_list[1]: coordinates must lie in [0, 1)"]


def test_fermi_radii_must_decrease():
    violations = collect_violations(minimal(kkgeom={"radii": [0.01, 0.02, 0.03, 0.04]}))
    assert any(v.startswith("kkgeom.radii") for v in violations)


def test_top_level_must_be_mapping():
    assert collect_violations(["spectrum"]) == ["config: top level must be a mapping"]


def test_unsupported_api_version():
    assert any(v.startswith("apiVersion") for v in collect_violations(minimal(apiVersion="v2")))
