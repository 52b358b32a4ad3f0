import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from jsonschema import Draft7Validator


_LOGGER = logging.getLogger(__name__)

DEFAULT_SCHEMA_DIR = Path(__file__).resolve().parent.parent / "config" / "schemas"
SCENARIO_SCHEMA_ID = "scenario:v1"


class SchemaValidator:
    """
    Validate scenario documents against the JSON Schemas in ``schema_dir``.
    Schema id ``name:vN`` resolves to ``name_vN.json``; validators are cached.
    """

    def __init__(self, schema_dir: Union[str, Path, None] = None):
        self.schema_dir = Path(schema_dir) if schema_dir is not None else DEFAULT_SCHEMA_DIR
        self._json_validators: Dict[str, Draft7Validator] = {}

    def _schema_path(self, schema_id: str) -> Path:
        return (self.schema_dir / (schema_id.replace(":", "_") + ".json")).resolve()

    def _load_json_schema(self, schema_id: str) -> Draft7Validator:
        if schema_id in self._json_validators:
            return self._json_validators[schema_id]
        path = self._schema_path(schema_id)
        if not path.exists():
            raise FileNotFoundError(f"Schema file not found: {path}")
        with path.open("r", encoding="utf-8") as f:
            schema_obj = json.load(f)
        Draft7Validator.check_schema(schema_obj)
        validator = Draft7Validator(schema_obj)
        self._json_validators[schema_id] = validator
        return validator

    def errors(self, schema_id: str, payload: Any) -> List[str]:
        """Every schema problem, as ``path: message`` strings in document order."""
        validator = self._load_json_schema(schema_id)
        problems = []
        for err in sorted(validator.iter_errors(payload), key=lambda e: [str(p) for p in e.path]):
            where = "/".join(str(p) for p in err.path) or "<root>"
            problems.append(f"{where}: {err.message}")
        return problems

    def validate(self, schema_id: str, payload: Union[bytes, str, Dict[str, Any]]) -> Tuple[bool, str]:
        if isinstance(payload, (bytes, str)):
            try:
                raw = payload.decode("utf-8") if isinstance(payload, bytes) else payload
                payload = json.loads(raw)
            except Exception as exc:  # noqa: BLE001
                return False, f"Invalid JSON: {exc}"
        try:
            problems = self.errors(schema_id, payload)
        except FileNotFoundError as fnf:
            return False, str(fnf)
        except Exception as exc:  # noqa: BLE001
            _LOGGER.exception("Unexpected schema validation error")
            return False, f"Schema validation error: {exc}"
        if problems:
            return False, f"JSON Schema validation failed: {problems[0]}"
        return True, ""
