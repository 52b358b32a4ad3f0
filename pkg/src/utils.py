import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Iterable, List, Sequence, Tuple, Union

import numpy as np


_LOGGER = logging.getLogger(__name__)

THREADS_ENV_VAR = "IMLAB_THREADS"

ComplexLike = Union[float, int, Sequence[float]]


def generate_config_hash(config_obj: Any) -> str:
    """
    Deterministic id for a scenario configuration: SHA1 of its canonical JSON
    (sorted keys, no whitespace).
    """
    sha1 = hashlib.sha1()
    sha1.update(json.dumps(config_obj, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    return sha1.hexdigest()


def utc_timestamp_iso() -> str:
    """Return current UTC timestamp in ISO-8601 format with 'Z'."""
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def derive_seed(master_seed: int, counter: int) -> int:
    """
    Derive the seed of sub-task ``counter`` from ``master_seed``.
    The mapping depends only on the pair, never on scheduling order.
    """
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(counter,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def counter_rng(seed: int, counter: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox) for block ``counter`` of a seeded stream."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(counter,))
    return np.random.Generator(np.random.Philox(seq))


def thread_cap() -> int:
    """Worker-thread cap from IMLAB_THREADS; defaults to min(4, cpu_count)."""
    raw = os.getenv(THREADS_ENV_VAR)
    if raw is None or raw == "":
        return max(1, min(4, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError:
        _LOGGER.warning("Ignoring non-integer %s=%r, using 1 thread", THREADS_ENV_VAR, raw)
        return 1
    if value < 1:
        _LOGGER.warning("Ignoring non-positive %s=%r, using 1 thread", THREADS_ENV_VAR, raw)
        return 1
    return value


def split_thread_budget(budget: int, tasks: int) -> Tuple[int, int]:
    """
    Split ``budget`` threads between an outer pool over ``tasks`` items and
    the pools its tasks open: returns (outer, inner) with outer * inner <= budget.
    """
    budget = max(1, budget)
    outer = max(1, min(budget, tasks))
    return outer, max(1, budget // outer)


def parse_complex_vector(raw: Iterable[ComplexLike]) -> np.ndarray:
    """
    Parse amplitudes given as plain numbers or ``[re, im]`` pairs into a
    complex vector.
    """
    values: List[complex] = []
    for entry in raw:
        if isinstance(entry, (list, tuple)):
            if len(entry) != 2:
                raise ValueError(f"complex entry must be [re, im], got {entry!r}")
            values.append(complex(float(entry[0]), float(entry[1])))
        else:
            values.append(complex(float(entry)))
    return np.asarray(values, dtype=complex)


def parse_complex_matrix(raw: Iterable[Iterable[ComplexLike]]) -> np.ndarray:
    """Row-wise :func:`parse_complex_vector`."""
    rows = [parse_complex_vector(row) for row in raw]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("matrix rows must be non-empty and of equal length")
    return np.vstack(rows)


def format_float(value: float) -> str:
    """Render a float with 17 significant digits (round-trip exact)."""
    return format(float(value), ".17g")
