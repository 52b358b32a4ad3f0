import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.linalg_core import (
    DensityOperator,
    HermitianObservable,
    HilbertSpace,
    InvalidStateError,
    StateVector,
    random_unit_vector,
    random_unitary,
)
from src.meter import build_meter
from src.multiparticle import SymmetrySector, random_symmetric_state
from src.separation import (
    Environment,
    EnvironmentObject,
    PreparationViolation,
    contraction_norm,
    contraction_residual,
    environment_noise,
    environment_noise_by_object,
    has_separation_status,
    overlap_decompose,
    require_separation_status,
)
from src.utils import counter_rng

from .conftest import basis, state

seeds = st.integers(min_value=0, max_value=2**32 - 1)
taus = st.sampled_from([1, -1])


def _object(label, modes, tau=1, dim=4):
    return EnvironmentObject.symmetrized(label, [basis(dim, m) for m in modes], tau)


def test_environment_object_must_be_symmetric():
    space = HilbertSpace.standard(2)
    product = np.kron([1.0, 0.0], [0.0, 1.0])
    rho = DensityOperator(HilbertSpace.standard(4), np.outer(product, product))
    with pytest.raises(InvalidStateError):
        EnvironmentObject("bad", SymmetrySector(1, 2, space), rho)


def test_environment_labels_are_unique():
    with pytest.raises(ValueError):
        Environment((_object("a", [0]), _object("a", [1])))


def test_orthogonal_preparation_is_separated():
    env = Environment((_object("lab_a", [0]), _object("lab_b", [0, 1], tau=-1)))
    report = has_separation_status(state([0, 0, 0.6, 0.8]), env)
    assert report.passed
    assert report.max_residual < 1e-15
    assert [o["verdict"] for o in report.to_dict()["objects"]] == ["separated", "separated"]


def test_overlapping_preparation_is_rejected():
    env = Environment((_object("lab", [0]),))
    report = has_separation_status(basis(4, 0), env)
    assert not report.passed
    assert report.max_residual == pytest.approx(1.0)
    with pytest.raises(PreparationViolation) as info:
        require_separation_status(basis(4, 0), env)
    assert info.value.report.objects[0].label == "lab"
    allowed = require_separation_status(basis(4, 0), env, allow_violation=True)
    assert not allowed.passed


def test_empty_environment_passes_and_tolerance_must_be_positive():
    assert has_separation_status(basis(3, 1), Environment()).passed
    with pytest.raises(ValueError):
        has_separation_status(basis(3, 1), Environment(), tol=0.0)


def test_mixed_preparation_uses_the_worst_weighted_component():
    env = Environment((_object("lab", [0]),))
    space = HilbertSpace.standard(4)
    rho = DensityOperator.mixture(space, [0.25, 0.75], [basis(4, 0), basis(4, 2)])
    report = has_separation_status(rho, env)
    assert report.max_residual == pytest.approx(0.5, abs=1e-12)
    assert contraction_norm(env.objects[0], rho) == pytest.approx(0.5, abs=1e-12)


@given(seeds, taus)
def test_separation_is_basis_independent(seed, tau):
    rng = counter_rng(seed)
    space = HilbertSpace.standard(4)
    obj = EnvironmentObject.pure("env", random_symmetric_state(space, 2, tau, rng))
    psi = StateVector(space, random_unit_vector(4, rng))
    u = random_unitary(4, rng)
    moved_psi = StateVector.from_amplitudes(space, u @ psi.amplitudes)
    moved = obj.rotate(u)
    before = has_separation_status(psi, Environment((obj,)))
    after = has_separation_status(moved_psi, Environment((moved,)))
    assert before.passed == after.passed
    assert contraction_norm(obj, psi) == pytest.approx(contraction_norm(moved, moved_psi), abs=1e-12)


def test_rotated_separated_pair_stays_separated():
    u = random_unitary(4, counter_rng(11))
    env = Environment((_object("pair", [0, 1], tau=-1),))
    psi = state([0, 0, 1, 1])
    moved_psi = StateVector.from_amplitudes(psi.space, u @ psi.amplitudes)
    assert has_separation_status(moved_psi, env.rotate(u)).passed


@given(seeds, taus)
def test_residual_does_not_depend_on_the_primed_slot(seed, tau):
    rng = counter_rng(seed)
    space = HilbertSpace.standard(3)
    obj = EnvironmentObject.pure("env", random_symmetric_state(space, 3 if tau == 1 else 2, tau, rng))
    psi = StateVector(space, random_unit_vector(3, rng))
    values = [contraction_residual(obj, psi, slot) for slot in range(obj.n_particles)]
    assert max(values) - min(values) < 1e-12


def test_primed_slot_out_of_range():
    obj = _object("lab", [0])
    with pytest.raises(IndexError):
        contraction_residual(obj, basis(4, 1), slot=1)


def test_overlap_decomposition():
    psi = basis(3, 0)
    phi = state([1, 1, 0])
    dec = overlap_decompose(phi, psi)
    assert dec.c1 == pytest.approx(1 / math.sqrt(2))
    assert dec.c2 == pytest.approx(1 / math.sqrt(2))
    assert not dec.parallel
    assert np.allclose(dec.psi_perp.amplitudes, [0, 1, 0])
    assert overlap_decompose(psi, psi).parallel


def test_environment_noise_counts_registered_environment_particles():
    meter = build_meter(HermitianObservable.diagonal([1.0, 2.0, 3.0, 4.0]), registered=[2, 3])
    quiet = Environment((_object("far", [0, 1], tau=-1),))
    loud = Environment((_object("near", [2, 3], tau=-1), _object("far", [0])))
    assert environment_noise(meter, quiet) == pytest.approx(0.0, abs=1e-12)
    assert environment_noise(meter, loud) == pytest.approx(2.0)
    assert environment_noise_by_object(meter, loud)["far"] == pytest.approx(0.0, abs=1e-12)


def test_contraction_examples():
    single = _object("e1", [0], dim=3)
    assert contraction_residual(single, basis(3, 1)) == 0.0
    assert contraction_residual(single, state([1, 1, 0])) == pytest.approx(1 / math.sqrt(2))
    pair = _object("pair", [0, 1], dim=3)
    assert contraction_residual(pair, basis(3, 2)) < 1e-15


def test_second_object_can_fail_alone():
    env = Environment((_object("e1", [0], dim=3), _object("pair", [1, 2], dim=3)))
    report = has_separation_status(basis(3, 1), env)
    assert [o.separated for o in report.objects] == [True, False]
    assert not report.passed


@given(
    seeds,
    taus,
    st.integers(min_value=2, max_value=4),
    st.integers(min_value=1, max_value=2),
    st.floats(min_value=0.3, max_value=1.0),
)
def test_product_environment_residual_vanishes_exactly_off_the_span(seed, tau, dim, n, weight):
    rng = counter_rng(seed)
    space = HilbertSpace.standard(dim)
    chis = [StateVector(space, random_unit_vector(dim, rng)) for _ in range(n)]
    obj = EnvironmentObject.symmetrized("chi", chis, tau)
    span, _ = np.linalg.qr(np.column_stack([c.amplitudes for c in chis]))
    complement = np.eye(dim) - span @ span.conj().T

    inside = span @ (rng.normal(size=n) + 1j * rng.normal(size=n))
    inside /= np.linalg.norm(inside)
    outside = complement @ random_unit_vector(dim, rng)
    if np.linalg.norm(outside) > 1e-6:
        outside /= np.linalg.norm(outside)
        assert contraction_residual(obj, StateVector(space, outside)) < 1e-10
        mixed = StateVector.from_amplitudes(space, weight * inside + outside)
    else:
        mixed = StateVector(space, inside)
    assert contraction_residual(obj, mixed) > 1e-4
