"""
Meter models.

A meter pairs an observable's spectral measure with a registered subspace
H_ss (projector Π_ss). Complete meters have Π_ss = 1. Registration
probabilities come from the truncated effects Π_ss Π(X) Π_ss; the weight the
meter cannot see is reported as an explicit ``no_response`` channel.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .linalg_core import (
    PROJECTOR_TOL,
    DensityOperator,
    HermitianObservable,
    HilbertSpace,
    SpectralDecomposition,
    StateVector,
    is_hermitian,
    is_projector,
    max_norm,
    spectral_decompose,
)
from .utils import counter_rng, format_float, thread_cap


_LOGGER = logging.getLogger(__name__)

IN_DOMAIN = "in_domain"
NULL = "null"
PARTIAL = "partial"

DOMAIN_TOL = 1e-10
EFFECT_TOL = 1e-10
SAMPLING_FLOOR = 1e-10
DEFAULT_BLOCK = 8192


class MeterError(ValueError):
    """Invalid meter construction or query."""


Interval = Tuple[float, float]


@dataclass(frozen=True)
class BorelSet:
    """Finite union of half-open intervals [a, b), kept sorted and merged."""

    intervals: Tuple[Interval, ...] = ()

    def __post_init__(self) -> None:
        cleaned = []
        for a, b in self.intervals:
            a, b = float(a), float(b)
            if math.isnan(a) or math.isnan(b):
                raise MeterError("interval bounds must not be NaN")
            if a < b:
                cleaned.append((a, b))
        cleaned.sort()
        merged: List[Interval] = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def real_line(cls) -> "BorelSet":
        return cls(((-math.inf, math.inf),))

    @classmethod
    def interval(cls, a: float, b: float) -> "BorelSet":
        return cls(((a, b),))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, x: float) -> bool:
        return any(a <= x < b for a, b in self.intervals)

    def union(self, other: "BorelSet") -> "BorelSet":
        return BorelSet(self.intervals + other.intervals)

    def intersects(self, other: "BorelSet") -> bool:
        return any(
            max(a, c) < min(b, d) for a, b in self.intervals for c, d in other.intervals
        )

    def complement(self) -> "BorelSet":
        out = []
        cursor = -math.inf
        for a, b in self.intervals:
            if cursor < a:
                out.append((cursor, a))
            cursor = b
        if cursor < math.inf:
            out.append((cursor, math.inf))
        return BorelSet(tuple(out))


@dataclass(frozen=True)
class SpectralMeasure:
    """X ↦ Π(X) = Σ_{o_k ∈ X} Π_k."""

    decomposition: SpectralDecomposition

    @classmethod
    def of(cls, observable: HermitianObservable) -> "SpectralMeasure":
        return cls(spectral_decompose(observable))

    @property
    def outcomes(self) -> Tuple[float, ...]:
        return self.decomposition.eigenvalues

    @property
    def dim(self) -> int:
        return self.decomposition.dim

    def projector(self, cell: BorelSet) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for value, proj in zip(self.decomposition.eigenvalues, self.decomposition.eigenprojectors):
            if cell.contains(value):
                out += proj
        return out

    def observable(self) -> np.ndarray:
        return self.decomposition.reconstruct()

    def normalization_defect(self) -> float:
        return max_norm(self.projector(BorelSet.real_line()) - np.eye(self.dim))


@dataclass(frozen=True)
class DomainPredicate:
    """max_{λ ∈ forbidden} |ψ(λ)|² < ε′ (diagonal weight for mixed states)."""

    forbidden: FrozenSet[int]
    eps_prime: float

    def __post_init__(self) -> None:
        if not self.eps_prime > 0:
            raise MeterError(f"eps_prime must be > 0, got {self.eps_prime!r}")
        object.__setattr__(self, "forbidden", frozenset(int(i) for i in self.forbidden))

    def weights(self, state: Union[StateVector, DensityOperator, np.ndarray]) -> np.ndarray:
        if isinstance(state, DensityOperator):
            diag = np.real(np.diag(state.matrix))
        else:
            amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
            diag = np.abs(amps) ** 2
        idx = sorted(self.forbidden)
        if idx and idx[-1] >= diag.shape[0]:
            raise MeterError(f"forbidden index {idx[-1]} outside dim {diag.shape[0]}")
        return diag[idx]

    def __call__(self, state: Union[StateVector, DensityOperator, np.ndarray]) -> bool:
        w = self.weights(state)
        return bool(w.size == 0 or float(np.max(w)) < self.eps_prime)

    def superposition_bound(
        self, psi: np.ndarray, phi: np.ndarray, c: complex, c_prime: complex
    ) -> bool:
        """
        Bound kept by cψ + c′φ with |c|²+|c′|² = 1 when ψ and φ both satisfy
        the predicate: squared magnitude below 2ε′ on the forbidden set.
        """
        combo = c * np.asarray(psi) + c_prime * np.asarray(phi)
        w = self.weights(combo)
        return bool(w.size == 0 or float(np.max(w)) < 2 * self.eps_prime)


def amplitude_bound_predicate(forbidden: Iterable[int], eps_prime: float) -> DomainPredicate:
    return DomainPredicate(frozenset(forbidden), eps_prime)


def find_nonclosure_witness(
    dim: int, predicate: DomainPredicate, grid: int = 41
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Search real grid states ψ = (√a on a forbidden cell, √(1-a) on cell j)
    and φ (same, on cell k ≠ j) that both satisfy ``predicate`` while their
    equal superposition violates it and still respects the 2ε′ bound.
    """
    if not predicate.forbidden:
        return None
    f = min(predicate.forbidden)
    free = [i for i in range(dim) if i not in predicate.forbidden]
    c = 1.0 / math.sqrt(2.0)
    for a in np.linspace(0.0, 1.0, grid):
        for j in free:
            for k in free:
                if j == k:
                    continue
                psi = np.zeros(dim, dtype=complex)
                phi = np.zeros(dim, dtype=complex)
                psi[f] = phi[f] = math.sqrt(a)
                psi[j] = phi[k] = math.sqrt(1.0 - a)
                combo = c * psi + c * phi
                if (
                    predicate(psi)
                    and predicate(phi)
                    and not predicate(combo)
                    and predicate.superposition_bound(psi, phi, c, c)
                ):
                    return psi, phi
    return None


@dataclass(frozen=True)
class Meter:
    name: str
    observable: HermitianObservable
    measure: SpectralMeasure
    pi_ss: np.ndarray = field(repr=False)
    domain_predicate: Optional[DomainPredicate] = None
    labels: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        p = np.asarray(self.pi_ss, dtype=complex)
        self.observable.space.check_matrix(p, "pi_ss")
        ok, reason = is_projector(p)
        if not ok:
            raise MeterError(f"meter {self.name!r}: pi_ss {reason}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pi_ss", p)
        labels = tuple(self.labels) or tuple(format_float(o) for o in self.measure.outcomes)
        if len(labels) != len(self.measure.outcomes):
            raise MeterError("one label per outcome required")
        object.__setattr__(self, "labels", labels)

    @property
    def space(self) -> HilbertSpace:
        return self.observable.space

    @property
    def outcomes(self) -> Tuple[float, ...]:
        return self.measure.outcomes

    @property
    def is_complete(self) -> bool:
        return max_norm(self.pi_ss - np.eye(self.space.dim)) < PROJECTOR_TOL


def build_meter(
    observable: HermitianObservable,
    registered: Optional[Iterable[int]] = None,
    pi_ss: Optional[np.ndarray] = None,
    name: str = "meter",
    domain_predicate: Optional[DomainPredicate] = None,
) -> Meter:
    """
    Meter for ``observable``. ``registered`` lists eigen-indices (0-based,
    ascending eigenvalue order) whose eigenspaces span H_ss; ``pi_ss`` gives
    the projector directly. Neither means a complete meter.
    """
    if registered is not None and pi_ss is not None:
        raise MeterError("give registered eigen-indices or pi_ss, not both")
    measure = SpectralMeasure.of(observable)
    if registered is not None:
        indices = list(registered)
        if len(set(indices)) != len(indices):
            raise MeterError(f"registered indices must be distinct: {indices}")
        n = len(measure.outcomes)
        for i in indices:
            if not 0 <= i < n:
                raise MeterError(f"eigen-index {i} out of range [0, {n})")
        projector = np.zeros((measure.dim, measure.dim), dtype=complex)
        for i in indices:
            projector += measure.decomposition.eigenprojectors[i]
    elif pi_ss is not None:
        projector = np.asarray(pi_ss, dtype=complex)
    else:
        projector = np.eye(measure.dim, dtype=complex)
    meter = Meter(name, observable, measure, projector, domain_predicate)
    _LOGGER.debug(
        "Built meter %r: %d outcomes, rank(pi_ss)=%d, complete=%s",
        name,
        len(measure.outcomes),
        int(round(np.real(np.trace(meter.pi_ss)))),
        meter.is_complete,
    )
    return meter


def threshold_meter(
    observable: HermitianObservable, threshold: float, name: str = "threshold"
) -> Meter:
    """Meter that reacts only to outcomes ≥ ``threshold``: Π_ss = Π([threshold, ∞))."""
    measure = SpectralMeasure.of(observable)
    projector = measure.projector(BorelSet.interval(threshold, math.inf))
    return Meter(name, observable, measure, projector)


def coarse_grain(measure: SpectralMeasure, partition: Sequence[BorelSet]) -> SpectralMeasure:
    """
    Relabel outcomes by cell: the new observable is Σ_l l·Π(X_l) with l = 1..n.
    Cells must be disjoint and cover the spectrum; empty cells are dropped.
    """
    for i, a in enumerate(partition):
        for b in partition[i + 1:]:
            if a.intersects(b):
                raise MeterError(f"partition cells overlap: {a.intervals} and {b.intervals}")
    for value in measure.outcomes:
        if not any(cell.contains(value) for cell in partition):
            raise MeterError(f"spectral value {value!r} is not covered by the partition")
    values: List[float] = []
    projectors: List[np.ndarray] = []
    for label, cell in enumerate(partition, start=1):
        proj = measure.projector(cell)
        if max_norm(proj) < PROJECTOR_TOL:
            _LOGGER.debug("coarse_grain: cell %d holds no spectral value, dropped", label)
            continue
        values.append(float(label))
        projectors.append(proj)
    return SpectralMeasure(SpectralDecomposition(tuple(values), tuple(projectors)))


def coarse_grain_meter(
    meter: Meter, partition: Sequence[BorelSet], labels: Sequence[str] = ()
) -> Meter:
    measure = coarse_grain(meter.measure, partition)
    observable = HermitianObservable(meter.space, measure.observable())
    return Meter(meter.name, observable, measure, meter.pi_ss, meter.domain_predicate, tuple(labels))


def detector_grid_meter(
    space: HilbertSpace, cells: Sequence[Tuple[int, int]], name: str = "detector_grid"
) -> Meter:
    """
    Sub-detectors with disjoint active cells [a, b) on the position grid,
    composed into one meter with one outcome per detector. Grid points outside
    every cell form an unregistered remainder outcome.
    """
    mask = np.zeros(space.dim)
    partition: List[BorelSet] = []
    labels: List[str] = []
    for k, (a, b) in enumerate(cells):
        if not 0 <= a < b <= space.dim:
            raise MeterError(f"detector cell [{a}, {b}) outside grid of size {space.dim}")
        if np.any(mask[a:b]):
            raise MeterError(f"detector cell [{a}, {b}) overlaps another detector")
        mask[a:b] = 1.0
        partition.append(BorelSet.interval(a - 0.5, b - 0.5))
        labels.append(f"D{k + 1}")
    covered = partition[0] if partition else BorelSet()
    for cell in partition[1:]:
        covered = covered.union(cell)
    position = HermitianObservable.diagonal(np.arange(space.dim, dtype=float), space)
    measure = SpectralMeasure.of(position)
    remainder = covered.complement()
    if any(remainder.contains(float(x)) for x in range(space.dim)):
        partition.append(remainder)
        labels.append("remainder")
    base = Meter(name, position, measure, np.diag(mask).astype(complex))
    return coarse_grain_meter(base, partition, labels)


@dataclass(frozen=True)
class Effect:
    """0 ≤ E ≤ 1."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if not is_hermitian(m):
            raise MeterError("effect must be Hermitian")
        spectrum = np.linalg.eigvalsh(m)
        if spectrum.size and (spectrum[0] < -EFFECT_TOL or spectrum[-1] > 1 + EFFECT_TOL):
            raise MeterError(
                f"effect spectrum [{spectrum[0]:.3e}, {spectrum[-1]:.3e}] outside [0, 1]"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def truncated_effect(meter: Meter, cell: BorelSet) -> Effect:
    """E(X) = Π_ss Π(X) Π_ss; E(ℝ) = Π_ss."""
    p = meter.pi_ss
    return Effect(p @ meter.measure.projector(cell) @ p)


def outcome_effects(meter: Meter) -> List[Effect]:
    p = meter.pi_ss
    return [Effect(p @ proj @ p) for proj in meter.measure.decomposition.eigenprojectors]


def _clamp_probability(value: float, what: str) -> float:
    if -DOMAIN_TOL <= value < 0.0:
        return 0.0
    if 1.0 < value <= 1.0 + DOMAIN_TOL:
        return 1.0
    if not 0.0 <= value <= 1.0:
        raise MeterError(f"{what} probability {value!r} outside [0, 1]")
    return value


@dataclass(frozen=True)
class RegistrationDistribution:
    meter_name: str
    outcomes: Tuple[float, ...]
    labels: Tuple[str, ...]
    probabilities: Tuple[float, ...]
    no_response: float

    @property
    def registered_weight(self) -> float:
        return float(sum(self.probabilities))

    def as_dict(self) -> Dict[str, float]:
        out = {label: p for label, p in zip(self.labels, self.probabilities)}
        out["no_response"] = self.no_response
        return out

    def probability_of(self, outcome: float, tol: float = 1e-9) -> float:
        for o, p in zip(self.outcomes, self.probabilities):
            if abs(o - outcome) <= tol:
                return p
        raise KeyError(f"{outcome!r} is not an outcome of meter {self.meter_name!r}")


def registered_distribution(meter: Meter, state: DensityOperator) -> RegistrationDistribution:
    """P_k = tr(T Π_ss Π_k Π_ss); no_response = 1 - tr(T Π_ss)."""
    if state.space.dim != meter.space.dim:
        raise MeterError(f"state dim {state.space.dim} != meter dim {meter.space.dim}")
    probs = []
    for effect in outcome_effects(meter):
        value = float(np.real(np.trace(state.matrix @ effect.matrix)))
        probs.append(_clamp_probability(value, "outcome"))
    seen = float(np.real(np.trace(state.matrix @ meter.pi_ss)))
    no_response = _clamp_probability(1.0 - seen, "no_response")
    return RegistrationDistribution(
        meter.name, meter.outcomes, meter.labels, tuple(probs), no_response
    )


def postselected_distribution(dist: RegistrationDistribution) -> Dict[str, float]:
    """Registered probabilities renormalized by tr(T Π_ss)."""
    weight = 1.0 - dist.no_response
    if weight < 1e-12:
        raise MeterError(f"meter {dist.meter_name!r} registers nothing; post-selection undefined")
    return {label: p / weight for label, p in zip(dist.labels, dist.probabilities)}


def classify_state(meter: Meter, state: DensityOperator) -> str:
    p = meter.pi_ss
    inside = max_norm(state.matrix - p @ state.matrix @ p) < DOMAIN_TOL
    if inside and (meter.domain_predicate is None or meter.domain_predicate(state)):
        return IN_DOMAIN
    if float(np.real(np.trace(state.matrix @ p))) < DOMAIN_TOL:
        return NULL
    return PARTIAL


@dataclass(frozen=True)
class FrequencyRecord:
    meter_name: str
    labels: Tuple[str, ...]
    outcomes: Tuple[float, ...]
    counts: Tuple[int, ...]
    no_response: int
    shots: int
    seed: int

    def __post_init__(self) -> None:
        if sum(self.counts) + self.no_response != self.shots:
            raise MeterError("counts and no_response must sum to shots")

    def frequencies(self) -> Tuple[float, ...]:
        return tuple(c / self.shots for c in self.counts)

    def frequency_of(self, label: str) -> float:
        if label == "no_response":
            return self.no_response / self.shots
        return self.counts[self.labels.index(label)] / self.shots

    def rows(self) -> List[Tuple[str, int, str]]:
        """CSV rows ``outcome,count,frequency`` with a trailing no_response row."""
        out = [
            (label, count, format_float(count / self.shots))
            for label, count in zip(self.labels, self.counts)
        ]
        out.append(("no_response", self.no_response, format_float(self.no_response / self.shots)))
        return out

    def metadata(self) -> Dict[str, object]:
        return {"meter": self.meter_name, "seed": self.seed, "shots": self.shots}


def _sample_block(cdf: np.ndarray, seed: int, block: int, size: int) -> np.ndarray:
    rng = counter_rng(seed, block)
    draws = np.searchsorted(cdf, rng.random(size), side="right")
    return np.bincount(np.minimum(draws, cdf.size - 1), minlength=cdf.size)


def sample_registrations(
    meter: Meter,
    state: DensityOperator,
    shots: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK,
    threads: Optional[int] = None,
) -> FrequencyRecord:
    """
    Draw ``shots`` i.i.d. registrations. Block b of shots uses the Philox
    stream derived from (seed, b), so the record does not depend on the
    thread count.
    """
    if shots < 1:
        raise MeterError(f"shots must be >= 1, got {shots}")
    dist = registered_distribution(meter, state)
    weights = np.array(list(dist.probabilities) + [dist.no_response])
    weights[weights < SAMPLING_FLOOR] = 0.0
    total = float(weights.sum())
    if total <= 0.0:
        raise MeterError("distribution has no weight")
    cdf = np.cumsum(weights / total)
    cdf[-1] = 1.0
    sizes = [min(block_size, shots - start) for start in range(0, shots, block_size)]
    workers = max(1, min(threads or thread_cap(), len(sizes)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda item: _sample_block(cdf, seed, item[0], item[1]), enumerate(sizes)))
    counts = np.sum(parts, axis=0)
    _LOGGER.debug(
        "Sampled %d shots for meter %r in %d blocks (%d threads)", shots, meter.name, len(sizes), workers
    )
    return FrequencyRecord(
        meter.name,
        meter.labels,
        meter.outcomes,
        tuple(int(c) for c in counts[:-1]),
        int(counts[-1]),
        shots,
        seed,
    )


def binomial_bound(p: float, shots: int, sigmas: float = 4.0) -> float:
    return sigmas * math.sqrt(max(p * (1.0 - p), 0.0) / shots)
