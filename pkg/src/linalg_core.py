"""
Finite-dimensional complex linear algebra substrate.

States, density operators, Hermitian observables and their spectral
decompositions. Every value is validated once at construction and is
immutable afterwards (arrays are stored read-only), so operations can stay
assertion-free and values can be shared between threads.

Continuous labels are discretized: the basis of a :class:`HilbertSpace` is a
finite list of labelled cells and every integral over λ is a finite sum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla


_LOGGER = logging.getLogger(__name__)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
PROJECTOR_TOL = 1e-10
IMAG_DISCARD_TOL = 1e-10
IMAG_ERROR_TOL = 1e-8
CLUSTER_REL_TOL = 1e-9


class LinalgError(ValueError):
    """Base error for invalid linear-algebra inputs."""


class NonHermitianError(LinalgError):
    """Raised when an operator that must be Hermitian is not."""


class DimensionMismatchError(LinalgError):
    """Raised when operands live on spaces of different dimension."""


class InvalidStateError(LinalgError):
    """Raised for vectors or density operators violating their invariants."""


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


def max_norm(matrix: np.ndarray) -> float:
    """Largest absolute entry (0.0 for empty input)."""
    arr = np.asarray(matrix)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def hermiticity_defect(matrix: np.ndarray) -> float:
    m = np.asarray(matrix)
    return max_norm(m - m.conj().T)


def is_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    """Hermitian within ``tol`` relative to max(1, largest entry)."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return hermiticity_defect(m) <= tol * max(1.0, max_norm(m))


def is_projector(matrix: np.ndarray, tol: float = PROJECTOR_TOL) -> Tuple[bool, str]:
    """
    Check that ``matrix`` is an orthogonal projection.

    Returns (is_projector, reason). If valid, reason is an empty string.
    """
    p = np.asarray(matrix, dtype=complex)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        return False, f"projector must be square, got shape {p.shape}"
    herm = hermiticity_defect(p)
    if herm > tol:
        return False, f"projector not Hermitian (defect {herm:.3e})"
    idem = max_norm(p @ p - p)
    if idem > tol:
        return False, f"projector not idempotent (defect {idem:.3e})"
    return True, ""


def global_phase_overlap(u: np.ndarray, v: np.ndarray) -> float:
    """|<u, v>| for normalized vectors; 1 means equal up to a global phase."""
    return float(abs(np.vdot(np.asarray(u), np.asarray(v))))


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = 1e-10) -> bool:
    return abs(1.0 - global_phase_overlap(u, v)) < tol


@dataclass(frozen=True)
class HilbertSpace:
    """Finite-dimensional space with named basis cells."""

    dim: int
    basis_labels: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise LinalgError(f"dim must be >= 1, got {self.dim}")
        labels = tuple(self.basis_labels) or tuple(str(i) for i in range(self.dim))
        if len(labels) != self.dim:
            raise LinalgError(f"expected {self.dim} basis labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise LinalgError("basis labels must be distinct")
        object.__setattr__(self, "basis_labels", labels)

    @classmethod
    def standard(cls, dim: int) -> "HilbertSpace":
        return cls(dim=dim)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def check_matrix(self, matrix: np.ndarray, what: str = "operator") -> None:
        if np.shape(matrix) != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"{what} has shape {np.shape(matrix)}, space has dim {self.dim}"
            )


@dataclass(frozen=True)
class StateVector:
    """
    Pure state. ``normalized=False`` marks an intermediate (projected,
    not yet renormalized) vector; such vectors skip the norm check.
    """

    space: HilbertSpace
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise DimensionMismatchError(
                f"state has {amps.shape[0]} amplitudes, space has dim {self.space.dim}"
            )
        if self.normalized:
            norm = float(np.linalg.norm(amps))
            if abs(norm - 1.0) > NORM_TOL:
                raise InvalidStateError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_amplitudes(cls, space: HilbertSpace, amplitudes: Sequence[complex]) -> "StateVector":
        """Build a state, normalizing the given amplitudes."""
        amps = np.asarray(amplitudes, dtype=complex)
        norm = float(np.linalg.norm(amps))
        if norm < NORM_TOL:
            raise InvalidStateError("cannot normalize a zero vector")
        return cls(space, amps / norm)

    @classmethod
    def basis(cls, space: HilbertSpace, index: int) -> "StateVector":
        if not 0 <= index < space.dim:
            raise IndexError(f"basis index {index} out of range [0, {space.dim})")
        amps = np.zeros(space.dim, dtype=complex)
        amps[index] = 1.0
        return cls(space, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        return StateVector.from_amplitudes(self.space, self.amplitudes)

    def inner(self, other: "StateVector") -> complex:
        """<self, other>, antilinear in ``self``."""
        if other.space.dim != self.space.dim:
            raise DimensionMismatchError("inner product across different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityOperator":
        return DensityOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    """Positive, trace-1 operator."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        self.space.check_matrix(m, "density operator")
        if not is_hermitian(m):
            raise NonHermitianError(
                f"density operator not Hermitian (defect {hermiticity_defect(m):.3e})"
            )
        m = 0.5 * (m + m.conj().T)
        trace = float(np.real(np.trace(m)))
        if abs(trace - 1.0) > NORM_TOL:
            raise InvalidStateError(f"density operator trace {trace!r} differs from 1")
        min_eig = float(np.min(np.linalg.eigvalsh(m)))
        if min_eig < -PSD_TOL:
            raise InvalidStateError(f"density operator not positive (min eigenvalue {min_eig:.3e})")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def mixture(
        cls, space: HilbertSpace, weights: Sequence[float], states: Sequence[StateVector]
    ) -> "DensityOperator":
        if len(weights) != len(states):
            raise LinalgError("weights and states must have equal length")
        m = np.zeros((space.dim, space.dim), dtype=complex)
        for w, s in zip(weights, states):
            m += w * np.outer(s.amplitudes, s.amplitudes.conj())
        return cls(space, m)

    @classmethod
    def maximally_mixed(cls, space: HilbertSpace) -> "DensityOperator":
        return cls(space, space.identity() / space.dim)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def eigen_ensemble(self, weight_tol: float = 1e-14) -> List[Tuple[float, StateVector]]:
        """Spectral ensemble (p_i, v_i) with p_i > weight_tol."""
        vals, vecs = sla.eigh(self.matrix)
        ensemble = []
        for p, v in zip(vals[::-1], vecs.T[::-1]):
            if p > weight_tol:
                ensemble.append((float(p), StateVector.from_amplitudes(self.space, v)))
        return ensemble


@dataclass(frozen=True)
class HermitianObservable:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        self.space.check_matrix(m, "observable")
        if not is_hermitian(m):
            raise NonHermitianError(
                f"observable not Hermitian (defect {hermiticity_defect(m):.3e})"
            )
        object.__setattr__(self, "matrix", _frozen(0.5 * (m + m.conj().T)))

    @classmethod
    def diagonal(cls, values: Sequence[float], space: Optional[HilbertSpace] = None) -> "HermitianObservable":
        vals = np.asarray(values, dtype=float)
        space = space or HilbertSpace.standard(len(vals))
        return cls(space, np.diag(vals).astype(complex))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Clustered eigenvalues (ascending) with one eigenprojector each."""

    eigenvalues: Tuple[float, ...]
    eigenprojectors: Tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.eigenvalues) != len(self.eigenprojectors):
            raise LinalgError("one projector per eigenvalue required")
        object.__setattr__(
            self, "eigenprojectors", tuple(_frozen(p) for p in self.eigenprojectors)
        )

    @property
    def dim(self) -> int:
        return int(self.eigenprojectors[0].shape[0])

    def reconstruct(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for o, p in zip(self.eigenvalues, self.eigenprojectors):
            out += o * p
        return out

    def index_of(self, value: float, tol: float = 1e-9) -> int:
        for i, o in enumerate(self.eigenvalues):
            if abs(o - value) <= tol:
                return i
        raise KeyError(f"{value!r} is not an eigenvalue")


def spectral_decompose(
    observable: HermitianObservable, cluster_tol: Optional[float] = None
) -> SpectralDecomposition:
    """
    Eigen-decompose ``observable``; eigenvalues closer than ``cluster_tol``
    (default 1e-9 times the spectral radius) share one projector.
    """
    m = np.asarray(observable.matrix)
    if not is_hermitian(m):
        raise NonHermitianError("spectral_decompose requires a Hermitian operator")
    vals, vecs = sla.eigh(m)
    if cluster_tol is None:
        radius = float(np.max(np.abs(vals))) if vals.size else 0.0
        cluster_tol = CLUSTER_REL_TOL * max(radius, 1.0)

    groups: List[List[int]] = []
    for i, v in enumerate(vals):
        if groups and v - vals[groups[-1][-1]] < cluster_tol:
            groups[-1].append(i)
        else:
            groups.append([i])

    eigenvalues = []
    projectors = []
    for g in groups:
        block = vecs[:, g]
        eigenvalues.append(float(np.mean(vals[g])))
        projectors.append(block @ block.conj().T)
    _LOGGER.debug("spectral_decompose: dim=%d clusters=%d", m.shape[0], len(groups))
    return SpectralDecomposition(tuple(eigenvalues), tuple(projectors))


def born_probability(state: DensityOperator, projector: np.ndarray) -> float:
    """tr(T P) for an orthogonal projection P."""
    p = np.asarray(projector, dtype=complex)
    state.space.check_matrix(p, "projector")
    ok, reason = is_projector(p)
    if not ok:
        raise LinalgError(reason)
    prob = float(np.real(np.trace(state.matrix @ p)))
    if -PROJECTOR_TOL <= prob < 0.0:
        return 0.0
    if 1.0 < prob <= 1.0 + PROJECTOR_TOL:
        return 1.0
    if not 0.0 <= prob <= 1.0:
        raise InvalidStateError(f"Born probability {prob!r} outside [0, 1]")
    return prob


def expectation(state: DensityOperator, observable: HermitianObservable) -> float:
    """tr(T O); the imaginary residue is checked then discarded."""
    if state.space.dim != observable.space.dim:
        raise DimensionMismatchError(
            f"state dim {state.space.dim} != observable dim {observable.space.dim}"
        )
    value = complex(np.trace(state.matrix @ observable.matrix))
    if abs(value.imag) > IMAG_ERROR_TOL:
        raise NonHermitianError(f"expectation has imaginary part {value.imag:.3e}")
    if abs(value.imag) > IMAG_DISCARD_TOL:
        _LOGGER.warning("Discarding imaginary expectation residue %.3e", value.imag)
    return float(value.real)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_unit_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density(space: HilbertSpace, rng: np.random.Generator, rank: Optional[int] = None) -> DensityOperator:
    rank = rank or space.dim
    a = rng.normal(size=(space.dim, rank)) + 1j * rng.normal(size=(space.dim, rank))
    m = a @ a.conj().T
    return DensityOperator(space, m / np.real(np.trace(m)))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases
