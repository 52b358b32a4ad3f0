import copy

import pytest

import src.scenarios as scenarios

from src.config_loader import apply_overrides, load_config, load_config_dict
from src.metrics_exporter import MetricsExporter
from src.report import VIOLATION_DEMONSTRATED, canonical_json
from src.scenarios import ScenarioError, hypothesis_violation_demo, run_scenario
from src.separation import PreparationViolation

from .conftest import SCENARIO_DIR

SHIPPED = sorted(p for p in SCENARIO_DIR.iterdir() if p.suffix in (".json", ".yaml"))


def _raw(name):
    return copy.deepcopy(load_config(SCENARIO_DIR / name).raw)


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.name)
def test_shipped_scenarios_pass(path):
    report = run_scenario(load_config(path))
    assert report.all_passed, report.failed()
    assert report.checks


def test_reports_are_deterministic():
    config = apply_overrides(load_config(SCENARIO_DIR / "detector_grid.json"), shots=5000)
    first = run_scenario(config)
    second = run_scenario(config)
    assert canonical_json(first.to_dict()) == canonical_json(second.to_dict())


def test_seed_changes_the_sampled_frequencies():
    config = apply_overrides(load_config(SCENARIO_DIR / "detector_grid.json"), shots=5000)
    a = run_scenario(config).tables["frequencies.csv"].rows
    b = run_scenario(apply_overrides(config, seed=12345)).tables["frequencies.csv"].rows
    assert a != b


def test_two_lab_incomplete_meter_reports_remote_noise():
    report = run_scenario(load_config(SCENARIO_DIR / "two_lab_incomplete.json"))
    assert "environment_noise" in [c.name for c in report.checks]
    assert report.verdicts["incomplete_meter"] == "no remote contribution"


def test_detector_grid_null_packet_is_classified():
    report = run_scenario(load_config(SCENARIO_DIR / "detector_grid_null.yaml"))
    table = report.tables["frequencies.csv"]
    assert table.rows[-1][0] == "no_response"
    assert table.rows[-1][1] == 50000
    assert report.verdicts["domain"] == "null"


def test_violated_equivalence_is_a_demonstration():
    report = run_scenario(load_config(SCENARIO_DIR / "equivalence_violated.json"))
    assert report.verdicts["born_equivalence"] == VIOLATION_DEMONSTRATED
    assert report.results["preparation_gate"]["passed"] is False


def test_gate_rejects_overlapping_preparation():
    raw = _raw("equivalence_violated.json")
    del raw["allow_violation"]
    with pytest.raises(PreparationViolation):
        run_scenario(load_config_dict(raw))


def test_pauli_excluded_second_way_is_a_scenario_error():
    raw = _raw("equivalence_violated.json")
    raw["tau"] = -1
    with pytest.raises(ScenarioError, match="second_way"):
        run_scenario(load_config_dict(raw))


def test_unexpected_violation_fails_the_report():
    raw = _raw("equivalence_violated.json")
    del raw["expect_violation"]
    report = run_scenario(load_config_dict(raw))
    assert not report.all_passed
    assert "born_equivalence" in report.failed()


@pytest.mark.parametrize("tau", [1, -1])
def test_hypothesis_violation_demo(tau):
    if tau == -1:
        with pytest.raises(ValueError):
            hypothesis_violation_demo(tau)
    else:
        assert hypothesis_violation_demo(tau) > 0.01


def test_metrics_follow_the_checks():
    metrics = MetricsExporter()
    report = run_scenario(load_config(SCENARIO_DIR / "two_lab.json"), metrics=metrics)
    summary = metrics.get_metrics_summary()
    assert summary["checks"]["pass"] == len(report.checks)
    assert summary["checks"]["fail"] == 0.0


def test_worker_pools_follow_the_thread_argument(monkeypatch):
    sizes = []
    real = scenarios.ThreadPoolExecutor

    def pool(max_workers):
        sizes.append(max_workers)
        return real(max_workers=max_workers)

    monkeypatch.setattr(scenarios, "ThreadPoolExecutor", pool)
    config = load_config_dict({"kind": "equivalence", "dim": 2, "sweep": {"trials": 6, "max_dim": 3}})
    assert run_scenario(config, threads=1).all_passed
    assert sizes == [1]
    assert run_scenario(config, threads=3).all_passed
    assert sizes == [1, 3]
