"""
Scenario reports and their on-disk form.

``report.json`` is byte-stable for a fixed (config, seed): keys sorted,
floats printed with 17 significant digits, nothing time-dependent. Wall-clock
data goes to ``report.meta.json``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy

from . import __version__
from .utils import format_float, utc_timestamp_iso


_LOGGER = logging.getLogger(__name__)

REPORT_FILE = "report.json"
META_FILE = "report.meta.json"
VIOLATION_DEMONSTRATED = "violation demonstrated"


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    deviation: Optional[float] = None
    note: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {"name": self.name, "passed": self.passed}
        for key in ("value", "tolerance", "deviation", "note"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass
class Table:
    header: Tuple[str, ...]
    rows: List[Tuple[Any, ...]] = field(default_factory=list)


@dataclass
class Report:
    kind: str
    name: str
    config: Dict[str, Any]
    config_hash: str
    seed: int
    checks: List[Check] = field(default_factory=list)
    verdicts: Dict[str, str] = field(default_factory=dict)
    tables: Dict[str, Table] = field(default_factory=dict)
    sidecars: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    duration_ms: Optional[float] = None

    def add_check(
        self,
        name: str,
        passed: bool,
        value: Optional[float] = None,
        tolerance: Optional[float] = None,
        deviation: Optional[float] = None,
        note: Optional[str] = None,
    ) -> Check:
        if any(c.name == name for c in self.checks):
            raise ValueError(f"check {name!r} recorded twice")
        check = Check(name, bool(passed), value, tolerance, deviation, note)
        self.checks.append(check)
        _LOGGER.debug("check %s: %s", name, "pass" if check.passed else "FAIL")
        return check

    def add_deviation_check(self, name: str, deviation: float, tolerance: float, note: Optional[str] = None) -> Check:
        """Pass iff ``deviation`` < ``tolerance``."""
        return self.add_check(name, deviation < tolerance, deviation, tolerance, deviation, note)

    def add_demonstration(
        self,
        name: str,
        deviation: float,
        threshold: float,
        expect_violation: bool,
        tolerance: float,
    ) -> Check:
        """
        Check for a run whose hypotheses are violated: with ``expect_violation``
        it passes when the discrepancy exceeds ``threshold``; otherwise the
        ordinary tolerance applies.
        """
        if expect_violation:
            shown = deviation > threshold
            if shown:
                self.verdicts[name] = VIOLATION_DEMONSTRATED
            return self.add_check(name, shown, deviation, threshold, deviation, "expected violation")
        return self.add_deviation_check(name, deviation, tolerance, "hypothesis violated")

    def add_table(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        self.tables[name] = Table(tuple(header), [tuple(r) for r in rows])

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> Optional[float]:
        values = [c.deviation for c in self.checks if c.deviation is not None]
        return max(values) if values else None

    def failed(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "name": self.name,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
            "verdicts": dict(self.verdicts),
            "results": self.results,
            "tables": sorted(self.tables),
            "versions": versions(),
            "all_passed": self.all_passed,
            "max_deviation": self.max_deviation,
        }


def versions() -> Dict[str, str]:
    return {"imlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _canonical(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{_encode(k, indent, level + 1)}: {_encode(obj[k], indent, level + 1)}"
            for k in sorted(obj)
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        text = format_float(obj)
        if not any(c in text for c in ".en"):
            text += ".0"
        return text
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats, trailing newline."""
    return _encode(_canonical(obj), indent, 0) + "\n"


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def write_table(path: Union[str, Path], table: Table) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])


def emit_report(
    report: Report, out_dir: Union[str, Path], formats: Sequence[str] = ("json", "csv")
) -> List[Path]:
    """
    Write ``report.json`` (json), CSV tables with their JSON sidecars (csv),
    and the wall-clock sidecar ``report.meta.json``. I/O errors propagate.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if "json" in formats:
        path = out / REPORT_FILE
        path.write_text(canonical_json(report.to_dict()), encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        for name, table in sorted(report.tables.items()):
            path = out / name
            write_table(path, table)
            written.append(path)
        for name, payload in sorted(report.sidecars.items()):
            path = out / name
            path.write_text(canonical_json(payload), encoding="utf-8")
            written.append(path)
    meta = {
        "config_hash": report.config_hash,
        "duration_ms": report.duration_ms,
        "finished_at": utc_timestamp_iso(),
    }
    meta_path = out / META_FILE
    meta_path.write_text(canonical_json(meta), encoding="utf-8")
    written.append(meta_path)
    _LOGGER.info("Report for %s written to %s (%d files)", report.kind, out, len(written))
    return written
