import json

import pytest

from src.schema_validator import SCENARIO_SCHEMA_ID, SchemaValidator


@pytest.fixture
def validator():
    return SchemaValidator()


def test_accepts_the_schema_example(validator):
    ok, reason = validator.validate(
        SCENARIO_SCHEMA_ID, {"kind": "two_lab", "dim": 4, "observable": [1, 2, 3, 4], "labs": [0, 1]}
    )
    assert ok and reason == ""


def test_accepts_raw_json_text(validator):
    ok, _ = validator.validate(SCENARIO_SCHEMA_ID, json.dumps({"kind": "equivalence", "dim": 2}).encode())
    assert ok


def test_rejects_invalid_json(validator):
    ok, reason = validator.validate(SCENARIO_SCHEMA_ID, "{not json")
    assert not ok
    assert reason.startswith("Invalid JSON")


def test_errors_carry_the_document_path(validator):
    problems = validator.errors(SCENARIO_SCHEMA_ID, {"kind": "two_lab", "dim": 0, "tau": 2})
    assert any(p.startswith("dim:") for p in problems)
    assert any(p.startswith("tau:") for p in problems)


def test_state_takes_exactly_one_form(validator):
    payload = {"kind": "separation_check", "dim": 2, "prepared": {"mode": 0, "support": [0, 1]}}
    ok, reason = validator.validate(SCENARIO_SCHEMA_ID, payload)
    assert not ok
    assert "prepared" in reason


def test_unknown_schema(validator, tmp_path):
    ok, reason = SchemaValidator(tmp_path).validate("scenario:v9", {})
    assert not ok
    assert "Schema file not found" in reason


def test_validators_are_cached(validator):
    validator.errors(SCENARIO_SCHEMA_ID, {})
    cached = validator._json_validators[SCENARIO_SCHEMA_ID]
    validator.errors(SCENARIO_SCHEMA_ID, {})
    assert validator._json_validators[SCENARIO_SCHEMA_ID] is cached
