"""
Two descriptions of a prepared particle S next to an environment of N
indistinguishable particles.

First way: Ψ ⊗ ψ, with no symmetrization across the S/environment boundary.
Second way: N_exch Π^{N+1}_τ (Ψ ⊗ ψ).

Under separation status the second way is recovered from the first by
projecting one slot onto ψ, and both give the same Born probabilities for
meters whose registered subspace is orthogonal to the environment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .linalg_core import (
    NORM_TOL,
    HermitianObservable,
    HilbertSpace,
    InvalidStateError,
    StateVector,
    max_norm,
    random_hermitian,
    random_unit_vector,
)
from .meter import Meter, build_meter
from .multiparticle import (
    MultiOperator,
    MultiState,
    SymmetrySector,
    ZeroSymmetrization,
    apply_on_slot,
    embed_product,
    permute_slots,
    random_symmetric_state,
    single_particle_support,
    symmetrize_vector,
    tensor_and_symmetrize,
)
from .separation import Environment, EnvironmentObject, has_separation_status


_LOGGER = logging.getLogger(__name__)

RECOVERY_TOL = 1e-12
PRECONDITION_TOL = 1e-10


class RecoveryDegenerate(ValueError):
    """Projecting the second-way state onto ψ left (numerically) nothing."""


@dataclass(frozen=True)
class FirstWayState:
    """
    Vector on H^{⊗N} ⊗ H, environment slots first. ``env``/``sys`` are set
    when the vector is known to be the product Ψ ⊗ ψ; ``nu`` is the
    renormalization applied by a recovery. ``separated`` is False when the
    recovery projected onto a ψ without separation status against Ψ, in which
    case the vector is not Ψ ⊗ ψ and ``reason`` says so.
    """

    single_space: HilbertSpace
    n_env: int
    vector: np.ndarray = field(repr=False)
    env: Optional[MultiState] = None
    sys: Optional[StateVector] = None
    nu: Optional[float] = None
    separated: Optional[bool] = None
    reason: Optional[str] = None

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=complex).reshape(-1)
        if v.shape[0] != self.single_space.dim ** (self.n_env + 1):
            raise InvalidStateError("first-way vector has the wrong dimension")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"first-way state norm {norm!r} differs from 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class SecondWayState:
    state: MultiState
    env: MultiState
    psi: StateVector
    n_exch: float

    @property
    def n_env(self) -> int:
        return self.env.n_particles

    @property
    def n_prime(self) -> float:
        """Coefficient of the cyclic expansion: N_exch / (N+1)."""
        return self.n_exch / (self.n_env + 1)

    @property
    def vector(self) -> np.ndarray:
        return self.state.amplitudes


def first_way(env: MultiState, psi: StateVector) -> FirstWayState:
    if env.single_space.dim != psi.space.dim:
        raise InvalidStateError("Ψ and ψ must share the single-particle space")
    return FirstWayState(
        env.single_space, env.n_particles, np.kron(env.amplitudes, psi.amplitudes), env, psi
    )


def second_way(env: MultiState, psi: StateVector, tau: Optional[int] = None) -> SecondWayState:
    tau = env.tau if tau is None else tau
    if tau is None:
        raise InvalidStateError("Ψ carries no symmetry sector; pass tau")
    state, n_exch = tensor_and_symmetrize([env, psi], tau)
    return SecondWayState(state, env, psi, n_exch)


def _separation_flag(env: MultiState, psi: StateVector) -> Tuple[Optional[bool], Optional[str]]:
    if env.sector is None:
        return None, None
    report = has_separation_status(psi, Environment((EnvironmentObject.pure("Ψ", env),)), PRECONDITION_TOL)
    if report.passed:
        return True, None
    return False, f"ψ lacks separation status against Ψ (residual {report.max_residual:.3e}); not Ψ ⊗ ψ"


def recover_first(
    sw: SecondWayState,
    psi: Optional[StateVector] = None,
    slot: Optional[int] = None,
    projector: Optional[np.ndarray] = None,
) -> FirstWayState:
    """
    Apply 1 ⊗ … ⊗ P ⊗ … ⊗ 1 on ``slot`` (default: the last) with
    P = |ψ⟩⟨ψ| (or ``projector``), renormalize, and move the projected slot to
    the end so the result compares directly with :func:`first_way`.

    When projecting onto ψ, its separation status against Ψ is checked; a
    failure is flagged on the result (``separated=False``) rather than raised.
    A bare ``projector`` is not checked.
    """
    d = sw.state.single_space.dim
    m = sw.state.n_particles
    slot = m - 1 if slot is None else slot
    separated: Optional[bool] = None
    reason: Optional[str] = None
    if projector is None:
        psi = sw.psi if psi is None else psi
        projector = np.outer(psi.amplitudes, psi.amplitudes.conj())
        separated, reason = _separation_flag(sw.env, psi)
    projected = apply_on_slot(sw.vector, projector, slot, d, m)
    norm = float(np.linalg.norm(projected))
    if norm < RECOVERY_TOL:
        raise RecoveryDegenerate(
            f"projection on slot {slot} annihilated the state (norm {norm:.3e})"
        )
    if separated is False:
        _LOGGER.warning("Recovered state is flagged: %s", reason)
    vector = projected / norm
    if slot != m - 1:
        perm = list(range(slot)) + [m - 1] + list(range(slot, m - 1))
        vector = permute_slots(vector, d, m, perm)
    return FirstWayState(
        sw.state.single_space, m - 1, vector, nu=1.0 / norm, separated=separated, reason=reason
    )


def secondway_projector(k: int, meter: Meter, n_env: int) -> MultiOperator:
    """Π'_k = Σ_{l=1}^{N+1} (Π_k Π_ss)^{(l)}."""
    single = meter.measure.decomposition.eigenprojectors[k] @ meter.pi_ss
    total: Optional[MultiOperator] = None
    for slot in range(n_env + 1):
        term = embed_product({slot: single}, n_env + 1)
        total = term if total is None else total + term
    assert total is not None
    return total


def working_sector_basis(env: MultiState, pi_ss: np.ndarray, tau: int) -> np.ndarray:
    """
    Orthonormal columns spanning {second_way(Ψ, ψ′) : ψ′ ∈ H_ss}.
    """
    d, n = env.single_space.dim, env.n_particles
    vals, vecs = np.linalg.eigh(pi_ss)
    columns = []
    for j in np.flatnonzero(vals > 0.5):
        product = np.kron(env.amplitudes, vecs[:, j])
        columns.append(symmetrize_vector(product, d, n + 1, tau))
    if not columns:
        return np.zeros((d ** (n + 1), 0), dtype=complex)
    u, s, _ = np.linalg.svd(np.column_stack(columns), full_matrices=False)
    return u[:, s > 1e-12]


def idempotency_defect(op: MultiOperator, basis: Optional[np.ndarray] = None) -> float:
    """max-norm of (P² - P) restricted to the columns of ``basis`` (whole space if None)."""
    defect = (op @ op).matrix - op.matrix
    if basis is not None:
        defect = defect @ basis
    return max_norm(defect)


def idempotency_counterexample(op: MultiOperator, tau: int) -> Tuple[np.ndarray, float]:
    """
    Search the symmetrized images of product basis vectors for the one with
    the largest ‖(P² - P) v‖.
    """
    d, n = op.single_dim, op.n_particles
    best_vec = np.zeros(d**n, dtype=complex)
    best = 0.0
    defect = op.matrix @ op.matrix - op.matrix
    for i in range(d**n):
        e = np.zeros(d**n, dtype=complex)
        e[i] = 1.0
        v = symmetrize_vector(e, d, n, tau)
        norm = float(np.linalg.norm(v))
        if norm < NORM_TOL:
            continue
        v = v / norm
        value = float(np.linalg.norm(defect @ v))
        if value > best:
            best, best_vec = value, v
    return best_vec, best


@dataclass(frozen=True)
class EquivalenceRow:
    k: int
    outcome: float
    first_way: float
    second_way: float

    @property
    def deviation(self) -> float:
        return abs(self.first_way - self.second_way)


@dataclass(frozen=True)
class EquivalenceReport:
    rows: Tuple[EquivalenceRow, ...]
    hypothesis_violated: bool
    reasons: Tuple[str, ...] = ()

    @property
    def max_deviation(self) -> float:
        return max((r.deviation for r in self.rows), default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hypothesis_violated": self.hypothesis_violated,
            "reasons": list(self.reasons),
            "max_deviation": self.max_deviation,
            "rows": [
                {
                    "k": r.k,
                    "outcome": r.outcome,
                    "first_way": r.first_way,
                    "second_way": r.second_way,
                    "deviation": r.deviation,
                }
                for r in self.rows
            ],
        }


def check_preconditions(env: MultiState, psi: StateVector, meter: Meter) -> List[str]:
    """Reasons the equivalence hypotheses fail; empty when they all hold."""
    reasons = []
    p = meter.pi_ss
    if max_norm(psi.amplitudes - p @ psi.amplitudes) > PRECONDITION_TOL:
        reasons.append("ψ is not inside the registered subspace")
    environment = Environment((EnvironmentObject.pure("Ψ", env),))
    if not has_separation_status(psi, environment, PRECONDITION_TOL).passed:
        reasons.append("ψ has no separation status with respect to Ψ")
    support = single_particle_support(env)
    if support.size and max_norm(p @ support) > PRECONDITION_TOL:
        reasons.append("Ψ has single-particle components inside the registered subspace")
    return reasons


def born_equivalence_report(env: MultiState, psi: StateVector, meter: Meter) -> EquivalenceReport:
    """
    Per outcome k: ⟨FW|1⊗Π_k|FW⟩ against ⟨SW|Π'_k|SW⟩. A failed precondition
    does not stop the computation; the report is stamped instead.
    """
    reasons = check_preconditions(env, psi, meter)
    fw = first_way(env, psi)
    try:
        sw = second_way(env, psi)
        sw_vector: Optional[np.ndarray] = sw.vector
    except ZeroSymmetrization:
        reasons.append("second-way state vanishes")
        sw_vector = None
    n = env.n_particles
    rows = []
    for k, (outcome, proj) in enumerate(
        zip(meter.outcomes, meter.measure.decomposition.eigenprojectors)
    ):
        local = embed_product({n: proj}, n + 1)
        p_first = local.expectation(fw.vector)
        p_second = 0.0
        if sw_vector is not None:
            p_second = secondway_projector(k, meter, n).expectation(sw_vector)
        rows.append(EquivalenceRow(k, outcome, p_first, p_second))
    report = EquivalenceReport(tuple(rows), bool(reasons), tuple(reasons))
    if reasons:
        _LOGGER.info("Equivalence hypotheses violated: %s", "; ".join(reasons))
    return report


@dataclass(frozen=True)
class SeparatedInstance:
    meter: Meter
    env: MultiState
    psi: StateVector


def _lift(tensor: np.ndarray, basis: np.ndarray) -> np.ndarray:
    n = tensor.ndim
    for slot in range(n):
        tensor = np.moveaxis(np.tensordot(basis, tensor, axes=([1], [slot])), 0, slot)
    return tensor.reshape(-1)


def random_separated_instance(
    dim: int, n_env: int, tau: int, rng: np.random.Generator
) -> SeparatedInstance:
    """
    Random meter observable with a random registered subspace H_ss, ψ ∈ H_ss,
    and a τ-symmetric Ψ built entirely from H_ss^⊥.
    """
    observable = HermitianObservable(HilbertSpace.standard(dim), random_hermitian(dim, rng))
    _, vecs = np.linalg.eigh(observable.matrix)
    min_free = n_env if tau == -1 else 1
    if dim - min_free < 1:
        raise ValueError(f"d={dim} too small for N={n_env} with τ={tau:+d}")
    registered_count = int(rng.integers(1, dim - min_free + 1))
    order = rng.permutation(dim)
    registered = sorted(int(i) for i in order[:registered_count])
    free = sorted(int(i) for i in order[registered_count:])
    meter = build_meter(observable, registered=registered, name="random")

    reg_basis = vecs[:, registered]
    psi = StateVector(observable.space, reg_basis @ random_unit_vector(len(registered), rng))
    small = random_symmetric_state(HilbertSpace.standard(len(free)), n_env, tau, rng)
    amps = _lift(small.tensor(), vecs[:, free])
    env = MultiState(
        observable.space,
        n_env,
        amps / np.linalg.norm(amps),
        SymmetrySector(tau, n_env, observable.space),
    )
    return SeparatedInstance(meter, env, psi)
