"""
Metrics Exporter Module

Prometheus metrics for scenario runs, kept in an isolated registry and
written as a text file next to the report.
"""

import logging
import re
from pathlib import Path
from threading import Lock
from typing import Any, Dict, Union

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile


class MetricsExporter:
    """
    Per-run metrics:
    - checks evaluated, by kind and status
    - scenario wall-clock duration
    - Monte Carlo shots drawn
    - last measured deviation per check
    """

    def __init__(self) -> None:
        self.logger = logging.getLogger(__name__)
        self._lock = Lock()
        self.registry = CollectorRegistry()
        self._init_metrics()

    def _init_metrics(self) -> None:
        self.checks_total = Counter(
            'imlab_checks_total',
            'Number of scenario checks evaluated',
            ['kind', 'status'],  # 'pass' or 'fail'
            registry=self.registry
        )

        self.scenario_duration = Histogram(
            'imlab_scenario_duration_seconds',
            'Wall-clock time per scenario run',
            ['kind'],
            buckets=[0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0],
            registry=self.registry
        )

        self.shots_total = Counter(
            'imlab_shots_total',
            'Monte Carlo registrations drawn',
            ['kind'],
            registry=self.registry
        )

        self.check_deviation = Gauge(
            'imlab_check_deviation',
            'Last measured deviation of a check',
            ['kind', 'check'],
            registry=self.registry
        )

        self.logger.debug("Prometheus metrics initialized")

    def record_check(self, kind: str, check: str, passed: bool, deviation: Union[float, None] = None) -> None:
        with self._lock:
            self.checks_total.labels(kind=kind, status='pass' if passed else 'fail').inc()
            if deviation is not None:
                self.check_deviation.labels(kind=kind, check=self._sanitize_label(check)).set(deviation)

    def record_duration(self, kind: str, seconds: float) -> None:
        with self._lock:
            self.scenario_duration.labels(kind=kind).observe(seconds)

    def add_shots(self, kind: str, shots: int) -> None:
        with self._lock:
            self.shots_total.labels(kind=kind).inc(shots)

    def _sanitize_label(self, label: str) -> str:
        """Sanitize label value for Prometheus."""
        sanitized = re.sub(r'[^a-zA-Z0-9_:]', '_', label)
        if sanitized and sanitized[0].isdigit():
            sanitized = f"_{sanitized}"
        return sanitized[:100]

    def get_metrics_summary(self) -> Dict[str, Any]:
        """Check counts by status and total shots, from the registry samples."""
        summary: Dict[str, Any] = {'checks': {'pass': 0.0, 'fail': 0.0}, 'shots': 0.0}
        with self._lock:
            for metric in self.registry.collect():
                for sample in metric.samples:
                    if sample.name == 'imlab_checks_total':
                        summary['checks'][sample.labels['status']] += sample.value
                    elif sample.name == 'imlab_shots_total':
                        summary['shots'] += sample.value
        return summary

    def write(self, path: Union[str, Path]) -> None:
        """Write the registry in Prometheus text format."""
        write_to_textfile(str(path), self.registry)
        self.logger.debug("Metrics written to %s", path)
