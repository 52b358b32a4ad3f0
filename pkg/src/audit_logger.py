"""
Audit Logger Module

Structured JSON-lines record of scenario runs: start/finish, every check
verdict, and the preparation gate outcome. One file per output directory.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from pythonjsonlogger import jsonlogger

from .utils import utc_timestamp_iso


@dataclass
class CheckEvent:
    """One check verdict inside a scenario run."""
    timestamp: str
    event_type: str
    kind: str
    check: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    note: Optional[str] = None


class AuditLogger:
    """
    Structured audit logger for scenario runs.

    Failures while writing audit records are logged and swallowed; they never
    change a scenario's result.
    """

    def __init__(
        self,
        log_file: str = "out/audit.jsonl",
        console_output: bool = False,
        log_level: str = "INFO"
    ):
        self.log_file = Path(log_file)
        self.console_output = console_output

        self.log_file.parent.mkdir(parents=True, exist_ok=True)

        self.logger = self._setup_logger(log_level)

        self._start_times: Dict[str, float] = {}

    def _setup_logger(self, log_level: str) -> logging.Logger:
        """Setup JSON structured logger, one per audit file."""
        logger = logging.getLogger(f"{__name__}.audit.{self.log_file.resolve()}")
        logger.setLevel(getattr(logging, log_level.upper()))

        for handler in list(logger.handlers):
            handler.close()
        logger.handlers.clear()

        json_formatter = jsonlogger.JsonFormatter(
            '%(timestamp)s %(levelname)s %(name)s %(message)s',
            timestamp=True
        )

        file_handler = logging.FileHandler(self.log_file, mode='a', encoding='utf-8')
        file_handler.setFormatter(json_formatter)
        logger.addHandler(file_handler)

        if self.console_output:
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(json_formatter)
            logger.addHandler(console_handler)

        # Prevent propagation to avoid duplicate logs
        logger.propagate = False

        return logger

    def close(self) -> None:
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)

    def log_scenario_started(self, kind: str, config_hash: str, seed: int) -> None:
        try:
            self.logger.info(
                "scenario_started",
                extra={
                    "event_type": "scenario_started",
                    "kind": kind,
                    "config_hash": config_hash,
                    "seed": seed,
                },
            )
        except Exception as e:  # noqa: BLE001
            self.logger.error(f"Failed to log scenario start: {e}")

    def log_scenario_finished(
        self,
        kind: str,
        config_hash: str,
        seed: int,
        all_passed: bool,
        duration_ms: Optional[float] = None,
    ) -> None:
        try:
            self.logger.info(
                "scenario_finished",
                extra={
                    "event_type": "scenario_finished",
                    "kind": kind,
                    "config_hash": config_hash,
                    "seed": seed,
                    "verdict": "pass" if all_passed else "fail",
                    "duration_ms": duration_ms,
                },
            )
        except Exception as e:  # noqa: BLE001
            self.logger.error(f"Failed to log scenario finish: {e}")

    def log_check(
        self,
        kind: str,
        check: str,
        passed: bool,
        value: Optional[float] = None,
        tolerance: Optional[float] = None,
        note: Optional[str] = None,
    ) -> None:
        try:
            event = CheckEvent(
                timestamp=utc_timestamp_iso(),
                event_type="check_result",
                kind=kind,
                check=check,
                passed=passed,
                value=value,
                tolerance=tolerance,
                note=note,
            )
            event_dict = {k: v for k, v in asdict(event).items() if v is not None}
            level = logging.INFO if passed else logging.WARNING
            self.logger.log(level, "check_result", extra=event_dict)
        except Exception as e:  # noqa: BLE001
            self.logger.error(f"Failed to log check result: {e}")

    def log_preparation_gate(
        self, kind: str, report: Dict[str, Any], allow_violation: bool
    ) -> None:
        try:
            self.logger.info(
                "preparation_gate",
                extra={
                    "event_type": "preparation_gate",
                    "kind": kind,
                    "passed": report.get("passed"),
                    "objects": report.get("objects", []),
                    "tolerance": report.get("tolerance"),
                    "allow_violation": allow_violation,
                },
            )
        except Exception as e:  # noqa: BLE001
            self.logger.error(f"Failed to log preparation gate: {e}")

    def log_system_event(
        self,
        event_type: str,
        message: str,
        level: str = "INFO",
        metadata: Optional[Dict[str, Any]] = None
    ) -> None:
        try:
            event_data = {
                "event_type": event_type,
                "detail": message,
                "metadata": metadata or {}
            }
            log_method = getattr(self.logger, level.lower(), self.logger.info)
            log_method("system_event", extra=event_data)
        except Exception as e:  # noqa: BLE001
            self.logger.error(f"Failed to log system event: {e}")

