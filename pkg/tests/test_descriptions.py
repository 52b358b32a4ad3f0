import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.descriptions import (
    RecoveryDegenerate,
    born_equivalence_report,
    check_preconditions,
    first_way,
    idempotency_counterexample,
    idempotency_defect,
    random_separated_instance,
    recover_first,
    second_way,
    secondway_projector,
    working_sector_basis,
)
from src.linalg_core import (
    HermitianObservable,
    HilbertSpace,
    InvalidStateError,
    StateVector,
    equal_up_to_phase,
)
from src.meter import build_meter
from src.multiparticle import MultiState, tensor_and_symmetrize
from src.utils import counter_rng

from .conftest import basis

seeds = st.integers(min_value=0, max_value=2**32 - 1)
taus = st.sampled_from([1, -1])
sizes = st.integers(min_value=1, max_value=2)


def _instance(seed, tau, n_env):
    dim = n_env + 2 if tau == -1 else 3
    return random_separated_instance(dim, n_env, tau, counter_rng(seed))


def _env(dim, modes, tau):
    state, _ = tensor_and_symmetrize([basis(dim, m) for m in modes], tau)
    return state


@given(seeds, taus, sizes)
def test_separated_instance_satisfies_the_hypotheses(seed, tau, n_env):
    inst = _instance(seed, tau, n_env)
    assert check_preconditions(inst.env, inst.psi, inst.meter) == []


@given(seeds, taus, sizes)
def test_exchange_normalization_under_separation(seed, tau, n_env):
    inst = _instance(seed, tau, n_env)
    sw = second_way(inst.env, inst.psi)
    assert sw.n_exch == pytest.approx(math.sqrt(n_env + 1), rel=1e-10)
    assert sw.n_prime == pytest.approx(1 / math.sqrt(n_env + 1), rel=1e-10)


@given(seeds, taus, sizes)
def test_round_trip_recovers_the_first_way(seed, tau, n_env):
    inst = _instance(seed, tau, n_env)
    fw = first_way(inst.env, inst.psi)
    recovered = recover_first(second_way(inst.env, inst.psi))
    assert equal_up_to_phase(recovered.vector, fw.vector)
    assert recovered.nu == pytest.approx(math.sqrt(n_env + 1), rel=1e-10)


@given(seeds, taus)
def test_recovery_is_slot_covariant(seed, tau):
    inst = _instance(seed, tau, 2)
    fw = first_way(inst.env, inst.psi)
    sw = second_way(inst.env, inst.psi)
    for slot in range(3):
        assert equal_up_to_phase(recover_first(sw, slot=slot).vector, fw.vector)


@given(seeds, taus, sizes)
def test_born_probabilities_agree_under_separation(seed, tau, n_env):
    inst = _instance(seed, tau, n_env)
    report = born_equivalence_report(inst.env, inst.psi, inst.meter)
    assert not report.hypothesis_violated
    assert report.max_deviation < 1e-10
    assert sum(r.first_way for r in report.rows) == pytest.approx(1.0)


def test_born_probabilities_disagree_when_environment_is_registered():
    meter = build_meter(HermitianObservable.diagonal([0.0, 1.0, 2.0]), registered=[1, 2])
    env = _env(3, [1], 1)
    report = born_equivalence_report(env, basis(3, 1), meter)
    assert report.hypothesis_violated
    assert len(report.reasons) == 2
    assert report.max_deviation > 0.01
    row = report.rows[1]
    assert row.first_way == pytest.approx(1.0)
    assert row.second_way == pytest.approx(2.0)
    assert report.to_dict()["rows"][1]["deviation"] == pytest.approx(1.0)


def test_pauli_excluded_pair_is_stamped_not_raised():
    meter = build_meter(HermitianObservable.diagonal([0.0, 1.0, 2.0]), registered=[1])
    report = born_equivalence_report(_env(3, [1], -1), basis(3, 1), meter)
    assert "second-way state vanishes" in report.reasons
    assert all(r.second_way == 0.0 for r in report.rows)


def test_recovery_onto_an_absent_mode_is_degenerate():
    sw = second_way(_env(3, [0], 1), basis(3, 1))
    projector = np.diag([0.0, 0.0, 1.0]).astype(complex)
    with pytest.raises(RecoveryDegenerate):
        recover_first(sw, projector=projector)


def test_recovery_flags_a_psi_without_separation_status():
    env = _env(2, [0], 1)
    psi = StateVector.from_amplitudes(HilbertSpace.standard(2), [1.0, 1.0])
    recovered = recover_first(second_way(env, psi))
    assert recovered.separated is False
    assert "separation status" in recovered.reason
    assert not equal_up_to_phase(recovered.vector, first_way(env, psi).vector)


def test_recovery_of_a_separated_psi_is_not_flagged():
    recovered = recover_first(second_way(_env(3, [0], 1), basis(3, 1)))
    assert recovered.separated is True
    assert recovered.reason is None
    sw = second_way(_env(3, [0], 1), basis(3, 1))
    projected = recover_first(sw, projector=np.diag([0, 1, 0]).astype(complex))
    assert projected.separated is None


def test_second_way_needs_a_sector():
    env = MultiState(basis(2, 0).space, 1, np.array([1.0, 0.0]))
    with pytest.raises(InvalidStateError):
        second_way(env, basis(2, 1))
    assert second_way(env, basis(2, 1), tau=-1).n_exch == pytest.approx(math.sqrt(2))


def test_first_way_dimension_mismatch():
    with pytest.raises(InvalidStateError):
        first_way(_env(3, [0], 1), basis(2, 1))


@given(seeds, taus)
def test_secondway_projectors_are_idempotent_on_the_working_sector(seed, tau):
    inst = _instance(seed, tau, 1)
    sector = working_sector_basis(inst.env, inst.meter.pi_ss, tau)
    assert sector.shape[1] >= 1
    for k in range(len(inst.meter.outcomes)):
        op = secondway_projector(k, inst.meter, 1)
        assert idempotency_defect(op, sector) < 1e-10


def test_secondway_projector_fails_off_the_working_sector():
    meter = build_meter(HermitianObservable.diagonal([0.0, 1.0, 2.0]), registered=[1, 2])
    op = secondway_projector(1, meter, 1)
    vec, value = idempotency_counterexample(op, 1)
    assert value > 0.1
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    assert idempotency_defect(op) > 0.1


def test_secondway_projectors_resolve_the_registered_counter():
    meter = build_meter(HermitianObservable.diagonal([0.0, 1.0, 2.0]), registered=[1, 2])
    total = sum(secondway_projector(k, meter, 1).matrix for k in range(3))
    counter = np.kron(meter.pi_ss, np.eye(3)) + np.kron(np.eye(3), meter.pi_ss)
    assert np.allclose(total, counter)


def test_random_instance_rejects_too_small_fermionic_space():
    with pytest.raises(ValueError):
        random_separated_instance(2, 2, -1, counter_rng(0))


@pytest.mark.parametrize("tau", [1, -1])
def test_second_way_of_two_single_particles(tau):
    sw = second_way(_env(3, [0], tau), basis(3, 1))
    expected = np.zeros(9, dtype=complex)
    expected[1], expected[3] = 1 / math.sqrt(2), tau / math.sqrt(2)
    assert np.allclose(sw.vector, expected)
    recovered = recover_first(sw)
    assert equal_up_to_phase(recovered.vector, np.kron(basis(3, 0).amplitudes, basis(3, 1).amplitudes))


def test_cyclic_coefficient_with_two_environment_particles():
    sw = second_way(_env(4, [0, 1], -1), basis(4, 3))
    assert sw.n_prime == pytest.approx(1 / math.sqrt(3), abs=1e-10)


@pytest.mark.parametrize(
    "amplitudes, expected",
    [([0, 1, 0], [0.0, 1.0, 0.0]), ([0, 1, 1], [0.0, 0.5, 0.5])],
)
def test_born_equivalence_examples(amplitudes, expected):
    meter = build_meter(HermitianObservable.diagonal([1.0, 2.0, 3.0]), registered=[1, 2])
    psi = StateVector.from_amplitudes(HilbertSpace.standard(3), np.asarray(amplitudes, dtype=complex))
    report = born_equivalence_report(_env(3, [0], 1), psi, meter)
    assert not report.hypothesis_violated
    assert [r.first_way for r in report.rows] == pytest.approx(expected)
    assert [r.second_way for r in report.rows] == pytest.approx(expected)
    assert report.max_deviation < 1e-10
