import json

import pytest

from src.audit_logger import AuditLogger
from src.metrics_exporter import MetricsExporter


def _events(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def test_audit_records_are_json_lines(tmp_path):
    path = tmp_path / "nested" / "audit.jsonl"
    audit = AuditLogger(log_file=str(path))
    audit.log_scenario_started("two_lab", "abc", 7)
    audit.log_check("two_lab", "ccr", True, value=0.0, tolerance=1e-12)
    audit.log_check("two_lab", "born", False, value=0.5, tolerance=1e-10, note="hypothesis violated")
    audit.log_preparation_gate("two_lab", {"passed": True, "objects": [], "tolerance": 1e-10}, False)
    audit.log_system_event("suite_finished", "2 scenarios", metadata={"a": 0})
    audit.log_scenario_finished("two_lab", "abc", 7, all_passed=False, duration_ms=3.0)
    audit.close()

    events = _events(path)
    assert [e["message"] for e in events] == [
        "scenario_started",
        "check_result",
        "check_result",
        "preparation_gate",
        "system_event",
        "scenario_finished",
    ]
    assert events[0]["seed"] == 7
    assert events[1]["passed"] is True
    assert events[2]["levelname"] == "WARNING"
    assert events[2]["note"] == "hypothesis violated"
    assert "note" not in events[1]
    assert events[4]["metadata"] == {"a": 0}
    assert events[5]["verdict"] == "fail"


def test_audit_files_are_independent(tmp_path):
    first = AuditLogger(log_file=str(tmp_path / "a.jsonl"))
    second = AuditLogger(log_file=str(tmp_path / "b.jsonl"))
    first.log_system_event("one", "first only")
    second.log_system_event("two", "second only")
    first.close()
    second.close()
    assert [e["event_type"] for e in _events(tmp_path / "a.jsonl")] == ["one"]
    assert [e["event_type"] for e in _events(tmp_path / "b.jsonl")] == ["two"]


def test_metrics_summary_and_textfile(tmp_path):
    metrics = MetricsExporter()
    metrics.record_check("dynamics", "compatibility", True, 1e-12)
    metrics.record_check("dynamics", "1 odd name!", False, 0.4)
    metrics.add_shots("detector_grid", 1000)
    metrics.record_duration("dynamics", 0.2)
    summary = metrics.get_metrics_summary()
    assert summary["checks"] == {"pass": 1.0, "fail": 1.0}
    assert summary["shots"] == 1000.0

    path = tmp_path / "metrics.prom"
    metrics.write(path)
    text = path.read_text(encoding="utf-8")
    assert 'imlab_checks_total{kind="dynamics",status="pass"} 1.0' in text
    assert 'check="_1_odd_name_"' in text
    assert "imlab_scenario_duration_seconds_count" in text


def test_registries_are_isolated():
    a, b = MetricsExporter(), MetricsExporter()
    a.add_shots("detector_grid", 5)
    assert b.get_metrics_summary()["shots"] == 0.0
    assert a.get_metrics_summary()["shots"] == pytest.approx(5.0)
