"""
Occupation-number layer over d modes.

Basis vectors are occupation tuples ordered by total occupation, then
lexicographically. Fermionic ladder operators carry the sign
(-1)^{Σ_{j<k} n_j}, so |n⟩ = a†_{i1} … a†_{iN} |0⟩ for ascending i1 < … < iN.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .linalg_core import (
    NORM_TOL,
    DimensionMismatchError,
    HermitianObservable,
    HilbertSpace,
    IMAG_DISCARD_TOL,
    IMAG_ERROR_TOL,
    InvalidStateError,
    NonHermitianError,
)
from .multiparticle import MultiState, SymmetrySector, permutation_sign


_LOGGER = logging.getLogger(__name__)

CREATE = "create"
ANNIHILATE = "annihilate"


class CutoffExceeded(ValueError):
    """Bosonic creation would leave the truncated occupation space."""


class StatisticsMismatch(ValueError):
    """Wave-function symmetry τ differs from the Fock statistics η."""


Occupation = Tuple[int, ...]


@dataclass(frozen=True)
class FockSpace:
    """
    Truncated Fock space. Bosons keep every tuple with Σn_i ≤ n_max; fermions
    keep every 0/1 tuple and n_max is forced to the mode count.
    """

    modes: int
    eta: int
    n_max: int = 2
    basis: Tuple[Occupation, ...] = field(init=False, repr=False, compare=False)
    index: Dict[Occupation, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.modes < 1:
            raise ValueError(f"modes must be >= 1, got {self.modes}")
        if self.eta not in (1, -1):
            raise ValueError(f"eta must be +1 or -1, got {self.eta!r}")
        if self.eta == -1:
            object.__setattr__(self, "n_max", self.modes)
            cells = itertools.product((0, 1), repeat=self.modes)
        else:
            if self.n_max < 0:
                raise ValueError(f"n_max must be >= 0, got {self.n_max}")
            cells = itertools.product(range(self.n_max + 1), repeat=self.modes)
        basis = sorted(
            (tuple(c) for c in cells if sum(c) <= self.n_max), key=lambda occ: (sum(occ), occ)
        )
        object.__setattr__(self, "basis", tuple(basis))
        object.__setattr__(self, "index", {occ: i for i, occ in enumerate(basis)})
        _LOGGER.debug(
            "FockSpace modes=%d eta=%+d n_max=%d dim=%d", self.modes, self.eta, self.n_max, len(basis)
        )

    @classmethod
    def for_particles(cls, modes: int, eta: int, n_particles: int) -> "FockSpace":
        """Default cutoff N+1 for bosons."""
        return cls(modes, eta, n_particles + 1)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def hilbert(self) -> HilbertSpace:
        return HilbertSpace(self.dim, tuple("|" + ",".join(map(str, occ)) + ">" for occ in self.basis))

    def totals(self) -> np.ndarray:
        return np.array([sum(occ) for occ in self.basis])

    def sector(self, n_particles: int) -> List[int]:
        return [i for i, occ in enumerate(self.basis) if sum(occ) == n_particles]

    def check_mode(self, mode: int) -> None:
        if not 0 <= mode < self.modes:
            raise IndexError(f"mode {mode} out of range [0, {self.modes})")


@dataclass(frozen=True)
class FockState:
    space: FockSpace
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise DimensionMismatchError(
                f"Fock state has {amps.shape[0]} amplitudes, space has dim {self.space.dim}"
            )
        if self.normalized:
            norm = float(np.linalg.norm(amps))
            if abs(norm - 1.0) > NORM_TOL:
                raise InvalidStateError(f"Fock state norm {norm!r} differs from 1")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def is_zero(self) -> bool:
        return self.norm < NORM_TOL

    def normalize(self) -> "FockState":
        norm = self.norm
        if norm < NORM_TOL:
            raise InvalidStateError("cannot normalize the zero Fock vector")
        return FockState(self.space, self.amplitudes / norm)

    def amplitude(self, occupation: Sequence[int]) -> complex:
        return complex(self.amplitudes[self.space.index[tuple(occupation)]])


def vacuum(space: FockSpace) -> FockState:
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.index[(0,) * space.modes]] = 1.0
    return FockState(space, amps)


def basis_state(space: FockSpace, occupation: Sequence[int]) -> FockState:
    occ = tuple(int(n) for n in occupation)
    if occ not in space.index:
        raise InvalidStateError(f"occupation {occ} is not in the truncated basis")
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.index[occ]] = 1.0
    return FockState(space, amps)


@dataclass(frozen=True)
class LadderOperator:
    space: FockSpace
    mode: int
    kind: str
    matrix: np.ndarray = field(repr=False)

    @property
    def adjoint(self) -> "LadderOperator":
        other = ANNIHILATE if self.kind == CREATE else CREATE
        return LadderOperator(self.space, self.mode, other, self.matrix.conj().T)


def _creation_matrix(space: FockSpace, mode: int) -> np.ndarray:
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for col, occ in enumerate(space.basis):
        raised = list(occ)
        raised[mode] += 1
        target = space.index.get(tuple(raised))
        if target is None:
            continue
        if space.eta == 1:
            out[target, col] = math.sqrt(occ[mode] + 1)
        else:
            out[target, col] = (-1) ** sum(occ[:mode])
    return out


def ladder(space: FockSpace, mode: int, kind: str) -> LadderOperator:
    """a†_mode (``kind="create"``) or a_mode (``kind="annihilate"``) on the cutoff space."""
    space.check_mode(mode)
    create = _creation_matrix(space, mode)
    if kind == CREATE:
        matrix = create
    elif kind == ANNIHILATE:
        matrix = create.conj().T
    else:
        raise ValueError(f"unknown ladder kind {kind!r}")
    matrix.setflags(write=False)
    return LadderOperator(space, mode, kind, matrix)


def create(space: FockSpace, mode: int) -> LadderOperator:
    return ladder(space, mode, CREATE)


def annihilate(space: FockSpace, mode: int) -> LadderOperator:
    return ladder(space, mode, ANNIHILATE)


def apply_ladder(op: LadderOperator, state: FockState) -> FockState:
    """Apply a ladder operator; the result is returned unnormalized (possibly zero)."""
    if op.space != state.space:
        raise DimensionMismatchError("ladder operator and state live on different Fock spaces")
    if op.kind == CREATE and state.space.eta == 1:
        top = state.space.totals() == state.space.n_max
        if np.any(np.abs(state.amplitudes[top]) > NORM_TOL):
            raise CutoffExceeded(
                f"creating in mode {op.mode} from the top shell n_max={state.space.n_max}"
            )
    return FockState(state.space, op.matrix @ state.amplitudes, normalized=False)


def creation_state(space: FockSpace, modes: Sequence[int]) -> FockState:
    """a†_{modes[0]} a†_{modes[1]} … |0⟩, unnormalized."""
    state = vacuum(space)
    for mode in reversed(list(modes)):
        state = apply_ladder(create(space, mode), state)
    return state


def two_lab_state(space: FockSpace, k: int, l: int) -> FockState:
    """a†_k a†_l |0⟩ for one particle prepared in each laboratory (k ≠ l)."""
    if k == l:
        raise ValueError("the two laboratories prepare different modes")
    return creation_state(space, (k, l)).normalize()


def number_operator(space: FockSpace, mode: Optional[int] = None) -> np.ndarray:
    """n_mode, or the total number operator when ``mode`` is None."""
    if mode is None:
        values = space.totals()
    else:
        space.check_mode(mode)
        values = np.array([occ[mode] for occ in space.basis])
    return np.diag(values.astype(complex))


def additive_fock_observable(space: FockSpace, values: Sequence[float]) -> HermitianObservable:
    """O = Σ_n o_n a†_n a_n, diagonal with entries Σ_n o_n n_n."""
    o = np.asarray(values, dtype=float)
    if o.shape != (space.modes,):
        raise DimensionMismatchError(f"need {space.modes} mode values, got {o.shape}")
    diag = np.array([float(np.dot(o, occ)) for occ in space.basis])
    return HermitianObservable(space.hilbert, np.diag(diag).astype(complex))


def registered_fock_observable(
    space: FockSpace, values: Sequence[float], registered: Iterable[int]
) -> HermitianObservable:
    """Σ_{n∈registered} o_n a†_n a_n: the meter ignores modes outside ``registered``."""
    mask = np.zeros(space.modes)
    for mode in registered:
        space.check_mode(mode)
        mask[mode] = 1.0
    return additive_fock_observable(space, np.asarray(values, dtype=float) * mask)


def fock_expectation(state: FockState, observable: HermitianObservable) -> float:
    if observable.space.dim != state.space.dim:
        raise DimensionMismatchError("observable does not act on the state's Fock space")
    amps = state.amplitudes
    value = complex(np.vdot(amps, observable.matrix @ amps))
    if abs(value.imag) > IMAG_ERROR_TOL:
        raise NonHermitianError(f"Fock expectation has imaginary part {value.imag:.3e}")
    if abs(value.imag) > IMAG_DISCARD_TOL:
        _LOGGER.warning("Discarding imaginary Fock expectation residue %.3e", value.imag)
    return float(value.real)


def check_ccr(space: FockSpace, r: int, s: int, subset: str = "safe") -> float:
    """
    Max-norm deviation of a_r a†_s - η a†_s a_r - δ_rs 1.

    ``subset`` picks the input columns: "safe" (total ≤ n_max-1 for bosons,
    everything for fermions), "top" (the bosonic cutoff shell) or "full".
    """
    a_r = annihilate(space, r).matrix
    ad_s = create(space, s).matrix
    delta = 1.0 if r == s else 0.0
    defect = a_r @ ad_s - space.eta * (ad_s @ a_r) - delta * np.eye(space.dim)
    totals = space.totals()
    if subset == "full" or (subset == "safe" and space.eta == -1):
        cols = np.arange(space.dim)
    elif subset == "safe":
        cols = np.flatnonzero(totals <= space.n_max - 1)
    elif subset == "top":
        cols = np.flatnonzero(totals == space.n_max)
    else:
        raise ValueError(f"unknown subset {subset!r}")
    if cols.size == 0:
        return 0.0
    return float(np.max(np.abs(defect[:, cols])))


def _occupation_of(indices: Sequence[int], modes: int) -> Occupation:
    counts = Counter(indices)
    return tuple(counts.get(m, 0) for m in range(modes))


def to_fock(state: MultiState, space: Optional[FockSpace] = None) -> FockState:
    """
    Map a τ-symmetric N-particle wave function onto the Σn_i = N occupation
    sector. Bosons: √(N!/Πn_i!) Ψ(sorted indices); fermions: √N! Ψ(i1<…<iN).
    """
    if state.tau is None:
        raise StatisticsMismatch("state is not tagged with a symmetry sector")
    d, n = state.single_space.dim, state.n_particles
    space = space or FockSpace.for_particles(d, state.tau, n)
    if state.tau != space.eta:
        raise StatisticsMismatch(f"τ={state.tau:+d} does not match η={space.eta:+d}")
    if space.modes != d:
        raise DimensionMismatchError(f"{space.modes} modes but single-particle dim {d}")
    if n > space.n_max:
        raise CutoffExceeded(f"N={n} exceeds n_max={space.n_max}")
    tensor = state.tensor()
    amps = np.zeros(space.dim, dtype=complex)
    if space.eta == 1:
        tuples: Iterable[Tuple[int, ...]] = itertools.combinations_with_replacement(range(d), n)
    else:
        tuples = itertools.combinations(range(d), n)
    for idx in tuples:
        occ = _occupation_of(idx, d)
        weight = math.factorial(n)
        if space.eta == 1:
            for count in occ:
                weight //= math.factorial(count)
        amps[space.index[occ]] = math.sqrt(weight) * tensor[idx]
    return FockState(space, amps, normalized=state.normalized)


def from_fock(state: FockState, n_particles: int) -> MultiState:
    """Inverse of :func:`to_fock` on the Σn_i = N sector."""
    space = state.space
    others = [i for i, occ in enumerate(space.basis) if sum(occ) != n_particles]
    if others and float(np.max(np.abs(state.amplitudes[others]))) > NORM_TOL:
        raise InvalidStateError(f"Fock state has weight outside the N={n_particles} sector")
    d = space.modes
    tensor = np.zeros((d,) * n_particles, dtype=complex)
    for i in space.sector(n_particles):
        amp = state.amplitudes[i]
        if amp == 0:
            continue
        occ = space.basis[i]
        idx = tuple(m for m in range(d) for _ in range(occ[m]))
        weight = math.factorial(n_particles)
        if space.eta == 1:
            for count in occ:
                weight //= math.factorial(count)
            for perm in set(itertools.permutations(idx)):
                tensor[perm] = amp / math.sqrt(weight)
        else:
            for perm in itertools.permutations(range(n_particles)):
                target = tuple(idx[p] for p in perm)
                tensor[target] = permutation_sign(perm) * amp / math.sqrt(weight)
    single = HilbertSpace.standard(d)
    return MultiState(
        single,
        n_particles,
        tensor.reshape(-1),
        SymmetrySector(space.eta, n_particles, single),
        normalized=state.normalized,
    )
