"""
Tensor products of copies of a single-particle space.

Vectors on H^{⊗N} are stored dense (length d**N, C order, slot 0 is the most
significant index). τ-symmetrization is the explicit permutation-group average
(1/N!) Σ_σ τ^{sgn σ} P_σ; slots are 0-based throughout.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .linalg_core import (
    NORM_TOL,
    DimensionMismatchError,
    HilbertSpace,
    InvalidStateError,
    StateVector,
    is_hermitian,
    max_norm,
)


_LOGGER = logging.getLogger(__name__)

ZERO_SYMMETRIZATION_TOL = 1e-12
SYMMETRY_TOL = 1e-10
MAX_DENSE_ENTRIES = 100_000


class ZeroSymmetrization(ValueError):
    """The τ-projection annihilated the vector (e.g. Pauli exclusion)."""


class SlotError(IndexError):
    """Slot index outside [0, N)."""


def _check_tau(tau: int) -> None:
    if tau not in (1, -1):
        raise ValueError(f"tau must be +1 or -1, got {tau!r}")


@dataclass(frozen=True)
class SymmetrySector:
    """H^N_τ: τ = +1 bosons, τ = -1 fermions."""

    tau: int
    n_particles: int
    single_space: HilbertSpace

    def __post_init__(self) -> None:
        _check_tau(self.tau)
        if self.n_particles < 1:
            raise ValueError(f"N must be >= 1, got {self.n_particles}")


@dataclass(frozen=True)
class MultiState:
    """
    N-particle wave function on the dense product basis. ``sector`` is set when
    the vector is τ-symmetric; ``None`` marks a plain tensor-product vector.
    """

    single_space: HilbertSpace
    n_particles: int
    amplitudes: np.ndarray
    sector: Optional[SymmetrySector] = None
    normalized: bool = True

    def __post_init__(self) -> None:
        d, n = self.single_space.dim, self.n_particles
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != d**n:
            raise DimensionMismatchError(f"expected {d**n} amplitudes, got {amps.shape[0]}")
        if self.normalized:
            norm = float(np.linalg.norm(amps))
            if abs(norm - 1.0) > NORM_TOL:
                raise InvalidStateError(f"multi-particle state norm {norm!r} differs from 1")
        if self.sector is not None:
            if self.sector.n_particles != n or self.sector.single_space.dim != d:
                raise DimensionMismatchError("sector does not match state shape")
            defect = symmetry_defect(amps, d, n, self.sector.tau)
            if defect > SYMMETRY_TOL:
                raise InvalidStateError(f"state is not τ-symmetric (defect {defect:.3e})")
        frozen = amps.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "amplitudes", frozen)

    @property
    def tau(self) -> Optional[int]:
        return None if self.sector is None else self.sector.tau

    @property
    def dim(self) -> int:
        return int(self.amplitudes.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((self.single_space.dim,) * self.n_particles)


@dataclass(frozen=True)
class MultiOperator:
    """Operator on the dense d**N product space acting on ``slots``."""

    single_dim: int
    n_particles: int
    matrix: np.ndarray = field(repr=False)
    slots: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        size = self.single_dim**self.n_particles
        if np.shape(self.matrix) != (size, size):
            raise DimensionMismatchError(
                f"operator shape {np.shape(self.matrix)} does not match d**N = {size}"
            )
        m = np.array(self.matrix, dtype=complex, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "slots", tuple(sorted(set(self.slots))))

    def __add__(self, other: "MultiOperator") -> "MultiOperator":
        if (other.single_dim, other.n_particles) != (self.single_dim, self.n_particles):
            raise DimensionMismatchError("cannot add operators on different product spaces")
        return MultiOperator(
            self.single_dim, self.n_particles, self.matrix + other.matrix, self.slots + other.slots
        )

    def __matmul__(self, other: "MultiOperator") -> "MultiOperator":
        if (other.single_dim, other.n_particles) != (self.single_dim, self.n_particles):
            raise DimensionMismatchError("cannot compose operators on different product spaces")
        return MultiOperator(
            self.single_dim, self.n_particles, self.matrix @ other.matrix, self.slots + other.slots
        )

    @property
    def is_hermitian(self) -> bool:
        return is_hermitian(self.matrix)

    def expectation(self, vector: Union[np.ndarray, MultiState]) -> float:
        amps = vector.amplitudes if isinstance(vector, MultiState) else np.asarray(vector)
        return float(np.real(np.vdot(amps, self.matrix @ amps)))


def permutation_sign(perm: Sequence[int]) -> int:
    """Parity of a permutation of range(n) via its cycle decomposition."""
    seen = [False] * len(perm)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def permute_slots(vector: np.ndarray, d: int, n: int, perm: Sequence[int]) -> np.ndarray:
    """
    Return w with w(x_0, …, x_{n-1}) = v(x_{perm[0]}, …, x_{perm[n-1]}).
    """
    tensor = np.asarray(vector).reshape((d,) * n)
    return np.transpose(tensor, np.argsort(perm)).reshape(-1)


def transpose_slots(vector: np.ndarray, d: int, n: int, i: int, j: int) -> np.ndarray:
    perm = list(range(n))
    perm[i], perm[j] = perm[j], perm[i]
    return permute_slots(vector, d, n, perm)


def symmetrize_vector(vector: np.ndarray, d: int, n: int, tau: int) -> np.ndarray:
    """Π^n_τ applied to a dense vector (no renormalization)."""
    _check_tau(tau)
    tensor = np.asarray(vector, dtype=complex).reshape((d,) * n)
    out = np.zeros_like(tensor)
    for perm in itertools.permutations(range(n)):
        weight = permutation_sign(perm) if tau == -1 else 1
        out += weight * np.transpose(tensor, perm)
    return (out / math.factorial(n)).reshape(-1)


@lru_cache(maxsize=32)
def _symmetrizer_matrix_cached(d: int, n: int, tau: int) -> np.ndarray:
    size = d**n
    indices = np.arange(size).reshape((d,) * n)
    out = np.zeros((size, size), dtype=complex)
    rows = np.arange(size)
    for perm in itertools.permutations(range(n)):
        weight = permutation_sign(perm) if tau == -1 else 1
        cols = np.transpose(indices, perm).reshape(-1)
        out[rows, cols] += weight
    out /= math.factorial(n)
    out.setflags(write=False)
    return out


def symmetrizer_matrix(d: int, n: int, tau: int) -> np.ndarray:
    """Dense matrix of Π^n_τ on H^{⊗n}."""
    _check_tau(tau)
    if (d**n) ** 2 > 50 * MAX_DENSE_ENTRIES:
        _LOGGER.warning("symmetrizer_matrix: building a %d x %d dense matrix", d**n, d**n)
    return _symmetrizer_matrix_cached(d, n, tau)


def symmetry_defect(vector: np.ndarray, d: int, n: int, tau: int) -> float:
    """Largest deviation from P_(i,i+1) v = τ v over adjacent transpositions."""
    v = np.asarray(vector)
    worst = 0.0
    for i in range(n - 1):
        worst = max(worst, max_norm(transpose_slots(v, d, n, i, i + 1) - tau * v))
    return worst


def _factor_data(factor: Union[StateVector, MultiState]) -> Tuple[int, int, np.ndarray]:
    if isinstance(factor, MultiState):
        return factor.single_space.dim, factor.n_particles, factor.amplitudes
    return factor.space.dim, 1, factor.amplitudes


def tensor_product(factors: Sequence[Union[StateVector, MultiState]]) -> Tuple[HilbertSpace, int, np.ndarray]:
    """Kronecker product of the factors' amplitudes; returns (single space, N, vector)."""
    if not factors:
        raise ValueError("at least one factor required")
    first = factors[0]
    space = first.single_space if isinstance(first, MultiState) else first.space
    vector = np.ones(1, dtype=complex)
    total = 0
    for f in factors:
        d, n, amps = _factor_data(f)
        if d != space.dim:
            raise DimensionMismatchError("all factors must share the single-particle space")
        vector = np.kron(vector, amps)
        total += n
    if vector.size > MAX_DENSE_ENTRIES:
        _LOGGER.warning("Dense product vector with %d entries exceeds the desk-scale bound", vector.size)
    return space, total, vector


def tensor_and_symmetrize(
    factors: Sequence[Union[StateVector, MultiState]], tau: int
) -> Tuple[MultiState, float]:
    """
    τ-symmetrize the tensor product of ``factors`` and renormalize.

    Returns the normalized state and N_exch = 1 / (norm before renormalization).
    """
    _check_tau(tau)
    space, n, vector = tensor_product(factors)
    projected = symmetrize_vector(vector, space.dim, n, tau)
    norm = float(np.linalg.norm(projected))
    if norm < ZERO_SYMMETRIZATION_TOL:
        raise ZeroSymmetrization(
            f"τ={tau:+d} projection of the {n}-particle product vanishes (norm {norm:.3e})"
        )
    state = MultiState(space, n, projected / norm, SymmetrySector(tau, n, space))
    _LOGGER.debug("Cyclic expansion: N=%d, N'=%.6g", n, 1.0 / norm)
    return state, 1.0 / norm


def embed_product(ops: Dict[int, np.ndarray], n: int, d: Optional[int] = None) -> MultiOperator:
    """1 ⊗ … ⊗ A_k ⊗ … ⊗ 1 with A_k placed on every slot k of ``ops``."""
    if not ops and d is None:
        raise ValueError("need at least one operator or an explicit d")
    if d is None:
        d = int(np.shape(next(iter(ops.values())))[0])
    for slot, op in ops.items():
        if not 0 <= slot < n:
            raise SlotError(f"slot {slot} out of range [0, {n})")
        if np.shape(op) != (d, d):
            raise DimensionMismatchError(f"operator on slot {slot} has shape {np.shape(op)}")
    eye = np.eye(d, dtype=complex)
    matrix = np.ones((1, 1), dtype=complex)
    for slot in range(n):
        matrix = np.kron(matrix, np.asarray(ops.get(slot, eye), dtype=complex))
    return MultiOperator(d, n, matrix, tuple(ops))


def embed_op(op: np.ndarray, slot: int, n: int) -> MultiOperator:
    """O^{(slot)}: ``op`` on one factor, identity elsewhere."""
    return embed_product({slot: np.asarray(op, dtype=complex)}, n)


def additive_embed(op: np.ndarray, n: int) -> MultiOperator:
    """Σ_l O^{(l)}; commutes with every τ-symmetrizer."""
    total = embed_op(op, 0, n)
    for slot in range(1, n):
        total = total + embed_op(op, slot, n)
    return total


def apply_on_slot(vector: np.ndarray, op: np.ndarray, slot: int, d: int, n: int) -> np.ndarray:
    """O^{(slot)} v without building the d**n matrix."""
    if not 0 <= slot < n:
        raise SlotError(f"slot {slot} out of range [0, {n})")
    tensor = np.asarray(vector, dtype=complex).reshape((d,) * n)
    moved = np.tensordot(np.asarray(op, dtype=complex), tensor, axes=([1], [slot]))
    return np.moveaxis(moved, 0, slot).reshape(-1)


def cyclic_expansion(
    env: MultiState, psi: StateVector, tau: Optional[int] = None
) -> MultiState:
    """
    Build the symmetrized (N+1)-particle state from the cyclic sum

        N' Σ_{K=1}^{N+1} s_K Ψ(λ^{K+1}, …, λ^{N+1}, λ^1, …, λ^{K-1}) ψ(λ^K)

    where s_K = τ^{K·N} is the parity of the cyclic rotation placing ψ in slot K.
    N' is the normalization of the sum; under separation it is 1/√(N+1)
    and equals SecondWayState.n_prime. For N = 1 s_K equals τ^{N+1-K}.
    """
    tau = env.tau if tau is None else tau
    if tau is None:
        raise ValueError("environment state carries no symmetry sector; pass tau")
    _check_tau(tau)
    d, n = env.single_space.dim, env.n_particles
    if psi.space.dim != d:
        raise DimensionMismatchError("ψ and Ψ must share the single-particle space")
    m = n + 1
    product = np.kron(env.amplitudes, psi.amplitudes).reshape((d,) * m)
    total = np.zeros((d,) * m, dtype=complex)
    for k in range(1, m + 1):
        order = list(range(k + 1, m + 1)) + list(range(1, k)) + [k]
        axes = [order.index(slot) for slot in range(1, m + 1)]
        sign = tau ** (k * n)
        total += sign * np.transpose(product, axes)
    vector = total.reshape(-1)
    norm = float(np.linalg.norm(vector))
    if norm < ZERO_SYMMETRIZATION_TOL:
        raise ZeroSymmetrization(f"cyclic expansion vanishes (norm {norm:.3e})")
    state = MultiState(env.single_space, m, vector / norm, SymmetrySector(tau, m, env.single_space))
    _LOGGER.debug("Cyclic expansion: N=%d, N'=%.6g", n, 1.0 / norm)
    return state


def random_symmetric_state(
    space: HilbertSpace, n: int, tau: int, rng: np.random.Generator
) -> MultiState:
    """Normalized τ-symmetric state from a random product-space vector."""
    size = space.dim**n
    raw = rng.normal(size=size) + 1j * rng.normal(size=size)
    projected = symmetrize_vector(raw, space.dim, n, tau)
    norm = float(np.linalg.norm(projected))
    if norm < ZERO_SYMMETRIZATION_TOL:
        raise ZeroSymmetrization(f"no τ={tau:+d} states with N={n} on d={space.dim}")
    return MultiState(space, n, projected / norm, SymmetrySector(tau, n, space))


def single_particle_support(state: MultiState, tol: float = 1e-10) -> np.ndarray:
    """
    Orthonormal basis (columns) of the one-particle reduced support of a
    τ-symmetric state: the range of its first-slot marginal.
    """
    d, n = state.single_space.dim, state.n_particles
    matrix = state.amplitudes.reshape(d, d ** (n - 1))
    u, s, _ = np.linalg.svd(matrix, full_matrices=False)
    return u[:, s > tol]
