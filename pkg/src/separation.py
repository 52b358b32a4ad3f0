"""
Separation status of a prepared one-particle state against its environment.

A prepared ψ has separation status when, for every environment object with
state T on H^{⊗N}, contracting ψ into the first primed slot of T gives zero:

    Σ_{λ'} T(λ_1, …, λ_N; λ', λ'_2, …, λ'_N) ψ(λ') = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .linalg_core import (
    NORM_TOL,
    DensityOperator,
    DimensionMismatchError,
    HilbertSpace,
    InvalidStateError,
    StateVector,
    max_norm,
)
from .meter import Meter
from .multiparticle import (
    MultiState,
    SymmetrySector,
    additive_embed,
    symmetrizer_matrix,
    tensor_and_symmetrize,
)


_LOGGER = logging.getLogger(__name__)

SEPARATION_TOL = 1e-10
SUPPORT_TOL = 1e-10


class PreparationViolation(RuntimeError):
    """A preparation failed the separation-status gate."""

    def __init__(self, report: "SeparationReport") -> None:
        failing = ", ".join(r.label for r in report.objects if not r.separated)
        super().__init__(f"prepared state lacks separation status (failing objects: {failing})")
        self.report = report


@dataclass(frozen=True)
class EnvironmentObject:
    """N particles indistinguishable from the prepared one, in state T."""

    label: str
    sector: SymmetrySector
    state: DensityOperator = field(repr=False)

    def __post_init__(self) -> None:
        d, n = self.sector.single_space.dim, self.sector.n_particles
        if self.state.space.dim != d**n:
            raise DimensionMismatchError(
                f"object {self.label!r}: state dim {self.state.space.dim} != d**N = {d**n}"
            )
        sym = symmetrizer_matrix(d, n, self.sector.tau)
        defect = max_norm(sym @ self.state.matrix - self.state.matrix)
        if defect > SUPPORT_TOL:
            raise InvalidStateError(
                f"object {self.label!r} is not supported on the τ={self.sector.tau:+d} sector "
                f"(defect {defect:.3e})"
            )

    @property
    def single_dim(self) -> int:
        return self.sector.single_space.dim

    @property
    def n_particles(self) -> int:
        return self.sector.n_particles

    @classmethod
    def pure(cls, label: str, state: MultiState) -> "EnvironmentObject":
        if state.sector is None:
            raise InvalidStateError(f"object {label!r} must be τ-symmetric")
        amps = state.amplitudes
        space = HilbertSpace.standard(state.dim)
        return cls(label, state.sector, DensityOperator(space, np.outer(amps, amps.conj())))

    @classmethod
    def symmetrized(
        cls, label: str, factors: Sequence[StateVector], tau: int
    ) -> "EnvironmentObject":
        state, _ = tensor_and_symmetrize(factors, tau)
        return cls.pure(label, state)

    def tensor(self) -> np.ndarray:
        d, n = self.single_dim, self.n_particles
        return self.state.matrix.reshape((d,) * (2 * n))

    def rotate(self, unitary: np.ndarray) -> "EnvironmentObject":
        """Conjugate by U^{⊗N}."""
        big = np.ones((1, 1), dtype=complex)
        for _ in range(self.n_particles):
            big = np.kron(big, unitary)
        matrix = big @ self.state.matrix @ big.conj().T
        return EnvironmentObject(self.label, self.sector, DensityOperator(self.state.space, matrix))


@dataclass(frozen=True)
class Environment:
    objects: Tuple[EnvironmentObject, ...] = ()

    def __post_init__(self) -> None:
        objs = tuple(self.objects)
        dims = {o.single_dim for o in objs}
        if len(dims) > 1:
            raise DimensionMismatchError(f"environment objects use different single dims {dims}")
        labels = [o.label for o in objs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"environment labels must be unique: {labels}")
        object.__setattr__(self, "objects", objs)

    def __len__(self) -> int:
        return len(self.objects)

    def rotate(self, unitary: np.ndarray) -> "Environment":
        return Environment(tuple(o.rotate(unitary) for o in self.objects))


def _contract(obj: EnvironmentObject, amplitudes: np.ndarray, slot: int = 0) -> np.ndarray:
    n = obj.n_particles
    if amplitudes.shape[0] != obj.single_dim:
        raise DimensionMismatchError(
            f"ψ has dim {amplitudes.shape[0]}, object {obj.label!r} has single dim {obj.single_dim}"
        )
    if not 0 <= slot < n:
        raise IndexError(f"primed slot {slot} out of range [0, {n})")
    return np.tensordot(obj.tensor(), amplitudes, axes=([n + slot], [0]))


def contraction_residual(obj: EnvironmentObject, psi: StateVector, slot: int = 0) -> float:
    """Max-norm of T contracted with ψ on one primed slot (first by default)."""
    return max_norm(_contract(obj, np.asarray(psi.amplitudes), slot))


def mixed_contraction_residual(obj: EnvironmentObject, prepared: DensityOperator) -> float:
    """Mixed preparation ρ = Σ p_i |v_i⟩⟨v_i|: max_i √p_i · residual(v_i)."""
    worst = 0.0
    for weight, vec in prepared.eigen_ensemble():
        worst = max(worst, math.sqrt(weight) * contraction_residual(obj, vec))
    return worst


def contraction_norm(obj: EnvironmentObject, prepared: Union[StateVector, DensityOperator]) -> float:
    """
    Frobenius norm of the contraction, sqrt(Σ p_i ‖T·v_i‖²) for a mixture.
    Unlike the max-norm residual it is invariant under U and U^{⊗N}.
    """
    if isinstance(prepared, StateVector):
        return float(np.linalg.norm(_contract(obj, np.asarray(prepared.amplitudes))))
    total = sum(
        weight * float(np.linalg.norm(_contract(obj, vec.amplitudes))) ** 2
        for weight, vec in prepared.eigen_ensemble()
    )
    return math.sqrt(total)


@dataclass(frozen=True)
class ObjectResidual:
    label: str
    residual: float
    tolerance: float

    @property
    def separated(self) -> bool:
        return self.residual < self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "residual": self.residual,
            "verdict": "separated" if self.separated else "overlapping",
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class SeparationReport:
    objects: Tuple[ObjectResidual, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(o.separated for o in self.objects)

    @property
    def max_residual(self) -> float:
        return max((o.residual for o in self.objects), default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "objects": [o.to_dict() for o in self.objects],
        }


def has_separation_status(
    prepared: Union[StateVector, DensityOperator],
    env: Environment,
    tol: float = SEPARATION_TOL,
) -> SeparationReport:
    """Per-object residual report; an empty environment passes vacuously."""
    if not tol > 0:
        raise ValueError(f"tolerance must be > 0, got {tol!r}")
    results: List[ObjectResidual] = []
    for obj in env.objects:
        if isinstance(prepared, DensityOperator):
            residual = mixed_contraction_residual(obj, prepared)
        else:
            residual = contraction_residual(obj, prepared)
        results.append(ObjectResidual(obj.label, residual, tol))
    report = SeparationReport(tuple(results), tol)
    _LOGGER.debug(
        "Separation check: %d objects, max residual %.3e, passed=%s",
        len(results),
        report.max_residual,
        report.passed,
    )
    return report


def require_separation_status(
    prepared: Union[StateVector, DensityOperator],
    env: Environment,
    tol: float = SEPARATION_TOL,
    allow_violation: bool = False,
) -> SeparationReport:
    """Preparation gate: raise PreparationViolation unless every object separates."""
    report = has_separation_status(prepared, env, tol)
    if not report.passed:
        if not allow_violation:
            raise PreparationViolation(report)
        _LOGGER.warning(
            "Preparation lacks separation status (max residual %.3e); continuing as requested",
            report.max_residual,
        )
    return report


@dataclass(frozen=True)
class OverlapDecomposition:
    """φ = c1 ψ + c2 ψ⊥ with c2 ≥ 0; ``psi_perp`` is None when φ ∥ ψ."""

    c1: complex
    c2: float
    psi_perp: Optional[StateVector]

    @property
    def parallel(self) -> bool:
        return self.psi_perp is None


def overlap_decompose(phi: StateVector, psi: StateVector) -> OverlapDecomposition:
    if phi.space.dim != psi.space.dim:
        raise DimensionMismatchError("φ and ψ live on different spaces")
    c1 = psi.inner(phi)
    rest = phi.amplitudes - c1 * psi.amplitudes
    c2 = float(np.linalg.norm(rest))
    if c2 < NORM_TOL:
        return OverlapDecomposition(c1, 0.0, None)
    return OverlapDecomposition(c1, c2, StateVector(psi.space, rest / c2))


def environment_noise(meter: Meter, env: Environment) -> float:
    """
    Σ over objects of tr(T Σ_l Π_ss^{(l)}): the expected number of environment
    particles the meter would react to.
    """
    return float(sum(environment_noise_by_object(meter, env).values()))


def environment_noise_by_object(meter: Meter, env: Environment) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for obj in env.objects:
        if obj.single_dim != meter.space.dim:
            raise DimensionMismatchError(f"object {obj.label!r} does not match the meter space")
        counter = additive_embed(meter.pi_ss, obj.n_particles)
        out[obj.label] = float(np.real(np.trace(obj.state.matrix @ counter.matrix)))
    return out
