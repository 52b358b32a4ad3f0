"""
Unitary evolution of both descriptions and the commutation conditions under
which they stay compatible. Units: ħ = 1 unless ``hbar`` is given.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla

from .descriptions import FirstWayState, RecoveryDegenerate, first_way, recover_first, second_way
from .linalg_core import (
    DimensionMismatchError,
    NonHermitianError,
    StateVector,
    hermiticity_defect,
    is_hermitian,
    max_norm,
)
from .multiparticle import (
    MultiState,
    additive_embed,
    embed_product,
    symmetrizer_matrix,
    symmetry_defect,
)


_LOGGER = logging.getLogger(__name__)

COMMUTE_TOL = 1e-10
COMPATIBILITY_TOL = 1e-8
STATUS_LOST = "status projection vanished: separation status lost"


def commutes(a: np.ndarray, b: np.ndarray, tol: float = COMMUTE_TOL) -> Tuple[bool, float]:
    """(‖AB - BA‖_max < tol, ‖AB - BA‖_max)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot commute shapes {a.shape} and {b.shape}")
    deviation = max_norm(a @ b - b @ a)
    return deviation < tol, deviation


@dataclass(frozen=True)
class Hamiltonian:
    """Hermitian generator on the first-way carrier H^{⊗N} ⊗ H."""

    single_dim: int
    n_particles: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        size = self.single_dim**self.n_particles
        if m.shape != (size, size):
            raise DimensionMismatchError(f"Hamiltonian shape {m.shape} != ({size}, {size})")
        if not is_hermitian(m):
            raise NonHermitianError(f"Hamiltonian not Hermitian (defect {hermiticity_defect(m):.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def zero(cls, single_dim: int, n_particles: int) -> "Hamiltonian":
        size = single_dim**n_particles
        return cls(single_dim, n_particles, np.zeros((size, size), dtype=complex))

    @cached_property
    def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
        return sla.eigh(self.matrix)

    def commutes_with_symmetrizer(self, tau: int) -> Tuple[bool, float]:
        return commutes(self.matrix, symmetrizer_matrix(self.single_dim, self.n_particles, tau))

    def commutes_with_status_projectors(self, pi_ss: np.ndarray) -> Tuple[bool, float]:
        """[H, Π_ss^{(k)}] = 0 for every slot k; returns the worst deviation."""
        worst = 0.0
        for slot in range(self.n_particles):
            proj = embed_product({slot: np.asarray(pi_ss)}, self.n_particles)
            worst = max(worst, commutes(self.matrix, proj.matrix)[1])
        return worst < COMMUTE_TOL, worst

    def propagator(self, t: float, hbar: float = 1.0) -> np.ndarray:
        vals, vecs = self.spectrum
        return (vecs * np.exp(-1j * vals * t / hbar)) @ vecs.conj().T


def build_hamiltonian(
    h: np.ndarray, n_particles: int, v: Optional[np.ndarray] = None
) -> Hamiltonian:
    """
    Σ_l h^{(l)} + Σ_{l<m} v^{(l)} v^{(m)} on n_particles copies. Both terms
    commute with every τ-symmetrizer.
    """
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    matrix = additive_embed(h, n_particles).matrix
    if v is not None:
        v = np.asarray(v, dtype=complex)
        if not is_hermitian(v):
            raise NonHermitianError("pair term must be Hermitian")
        for l in range(n_particles):
            for m in range(l + 1, n_particles):
                matrix = matrix + embed_product({l: v, m: v}, n_particles).matrix
    return Hamiltonian(d, n_particles, matrix)


Evolvable = Union[np.ndarray, MultiState, FirstWayState]


def evolve(ham: Hamiltonian, state: Evolvable, t: float, hbar: float = 1.0) -> np.ndarray:
    """exp(-iHt/ħ) ψ via the spectral decomposition of H."""
    if isinstance(state, MultiState):
        vec = state.amplitudes
    elif isinstance(state, FirstWayState):
        vec = state.vector
    else:
        vec = np.asarray(state, dtype=complex)
    if vec.shape[0] != ham.matrix.shape[0]:
        raise DimensionMismatchError(f"state dim {vec.shape[0]} != H dim {ham.matrix.shape[0]}")
    return ham.propagator(t, hbar) @ vec


def evolve_expm(ham: Hamiltonian, vector: np.ndarray, t: float, hbar: float = 1.0) -> np.ndarray:
    """One-shot scipy matrix exponential; used as an independent oracle."""
    return sla.expm(-1j * ham.matrix * t / hbar) @ np.asarray(vector, dtype=complex)


@dataclass(frozen=True)
class CompatibilityRow:
    t: float
    deviation: float
    status_preserved: bool
    symmetry_defect: float
    status_weight: float
    reason: Optional[str] = None


@dataclass(frozen=True)
class CompatibilityReport:
    rows: Tuple[CompatibilityRow, ...]
    commutes_with_symmetrizer: bool
    symmetrizer_deviation: float
    commutes_with_status: bool
    status_deviation: float
    hypothesis_violated: bool

    @property
    def max_deviation(self) -> float:
        return max((r.deviation for r in self.rows), default=0.0)

    @property
    def status_weight_drift(self) -> float:
        weights = [r.status_weight for r in self.rows]
        return (max(weights) - min(weights)) if weights else 0.0

    @property
    def status_lost_at(self) -> Tuple[float, ...]:
        return tuple(r.t for r in self.rows if r.reason == STATUS_LOST)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "commutes_with_symmetrizer": self.commutes_with_symmetrizer,
            "symmetrizer_deviation": self.symmetrizer_deviation,
            "commutes_with_status": self.commutes_with_status,
            "status_deviation": self.status_deviation,
            "hypothesis_violated": self.hypothesis_violated,
            "max_deviation": self.max_deviation,
            "status_lost_at": list(self.status_lost_at),
            "rows": [
                {
                    "t": r.t,
                    "deviation": r.deviation,
                    "status_preserved": r.status_preserved,
                    **({"reason": r.reason} if r.reason else {}),
                }
                for r in self.rows
            ],
        }


def compatibility_report(
    ham: Hamiltonian,
    env: MultiState,
    psi: StateVector,
    times: Sequence[float],
    pi_ss: np.ndarray,
    hbar: float = 1.0,
    strict: bool = False,
) -> CompatibilityReport:
    """
    For each t: evolve Ψ⊗ψ directly; evolve the symmetrized state, project the
    system slot with Π_ss and renormalize; deviation = 1 - |overlap|.

    A vanishing projection means the status was lost at t. With ``strict`` the
    RecoveryDegenerate propagates; otherwise the row gets deviation 1 and the
    reason STATUS_LOST.
    """
    tau = env.tau
    if tau is None:
        raise ValueError("Ψ carries no symmetry sector")
    if ham.n_particles != env.n_particles + 1 or ham.single_dim != env.single_space.dim:
        raise DimensionMismatchError("Hamiltonian does not act on H^{⊗N} ⊗ H")
    sym_ok, sym_dev = ham.commutes_with_symmetrizer(tau)
    status_ok, status_dev = ham.commutes_with_status_projectors(pi_ss)
    if not sym_ok:
        _LOGGER.warning("Hamiltonian does not commute with the symmetrizer (%.3e)", sym_dev)

    fw = first_way(env, psi)
    sw = second_way(env, psi)
    d, m = ham.single_dim, ham.n_particles
    status_counter = additive_embed(np.asarray(pi_ss), m).matrix
    rows: List[CompatibilityRow] = []
    for t in times:
        direct = evolve(ham, fw, t, hbar)
        evolved = evolve(ham, sw.state, t, hbar)
        defect = symmetry_defect(evolved, d, m, tau)
        weight = float(np.real(np.vdot(evolved, status_counter @ evolved)))
        reason: Optional[str] = None
        try:
            moved = MultiState(sw.state.single_space, m, evolved, normalized=False)
            trajectory = type(sw)(moved, sw.env, sw.psi, sw.n_exch)
            recovered = recover_first(trajectory, projector=pi_ss)
            deviation = 1.0 - abs(np.vdot(recovered.vector, direct))
        except RecoveryDegenerate:
            if strict:
                raise
            _LOGGER.info("Status projection vanished at t=%s", t)
            deviation, reason = 1.0, STATUS_LOST
        deviation = max(deviation, 0.0)
        rows.append(
            CompatibilityRow(
                float(t), float(deviation), deviation < COMPATIBILITY_TOL, defect, weight, reason
            )
        )
    return CompatibilityReport(
        tuple(rows), sym_ok, sym_dev, status_ok, status_dev, not (sym_ok and status_ok)
    )
