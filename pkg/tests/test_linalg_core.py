import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.linalg_core import (
    DensityOperator,
    HermitianObservable,
    HilbertSpace,
    InvalidStateError,
    LinalgError,
    NonHermitianError,
    StateVector,
    born_probability,
    equal_up_to_phase,
    expectation,
    is_projector,
    max_norm,
    random_density,
    random_hermitian,
    random_unit_vector,
    random_unitary,
    spectral_decompose,
)
from src.utils import counter_rng

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=6)


def test_state_vector_requires_unit_norm():
    space = HilbertSpace.standard(2)
    with pytest.raises(InvalidStateError):
        StateVector(space, [1.0, 1.0])
    psi = StateVector.from_amplitudes(space, [1.0, 1.0])
    assert psi.norm == pytest.approx(1.0, abs=1e-15)


def test_zero_vector_cannot_be_normalized():
    with pytest.raises(InvalidStateError):
        StateVector.from_amplitudes(HilbertSpace.standard(3), [0, 0, 0])


def test_hilbert_space_rejects_bad_dim_and_labels():
    with pytest.raises(LinalgError):
        HilbertSpace(0)
    with pytest.raises(LinalgError):
        HilbertSpace(2, ("a", "a"))


def test_density_operator_validation():
    space = HilbertSpace.standard(2)
    with pytest.raises(InvalidStateError):
        DensityOperator(space, np.diag([0.5, 0.6]))
    with pytest.raises(InvalidStateError):
        DensityOperator(space, np.diag([1.5, -0.5]))
    with pytest.raises(NonHermitianError):
        DensityOperator(space, np.array([[0.5, 1.0], [0.0, 0.5]]))


def test_observable_must_be_hermitian():
    with pytest.raises(NonHermitianError):
        HermitianObservable(HilbertSpace.standard(2), np.array([[0, 1], [0, 0]]))


def test_degenerate_eigenvalues_share_one_projector():
    dec = spectral_decompose(HermitianObservable.diagonal([1.0, 1.0, 2.0]))
    assert dec.eigenvalues == pytest.approx((1.0, 2.0))
    assert np.allclose(dec.eigenprojectors[0], np.diag([1, 1, 0]))
    assert dec.index_of(2.0) == 1
    with pytest.raises(KeyError):
        dec.index_of(3.0)


@given(seeds, dims)
def test_spectral_decomposition_reconstructs(seed, dim):
    rng = counter_rng(seed)
    obs = HermitianObservable(HilbertSpace.standard(dim), random_hermitian(dim, rng))
    dec = spectral_decompose(obs)
    assert max_norm(dec.reconstruct() - obs.matrix) < 1e-10
    assert max_norm(sum(dec.eigenprojectors) - np.eye(dim)) < 1e-10
    for p in dec.eigenprojectors:
        assert is_projector(p)[0]


@given(seeds, dims)
def test_born_probabilities_sum_to_one(seed, dim):
    rng = counter_rng(seed)
    space = HilbertSpace.standard(dim)
    rho = random_density(space, rng)
    obs = HermitianObservable(space, random_hermitian(dim, rng))
    dec = spectral_decompose(obs)
    probs = [born_probability(rho, p) for p in dec.eigenprojectors]
    assert sum(probs) == pytest.approx(1.0, abs=1e-10)
    mean = sum(o * p for o, p in zip(dec.eigenvalues, probs))
    assert expectation(rho, obs) == pytest.approx(mean, abs=1e-9)


def test_is_projector_reports_reason():
    ok, reason = is_projector(np.diag([1.0, 0.5]))
    assert not ok
    assert "idempotent" in reason
    ok, reason = is_projector(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert not ok
    assert "Hermitian" in reason
    assert is_projector(np.diag([1.0, 0.0])) == (True, "")


@given(seeds, dims)
def test_random_unitary_is_unitary(seed, dim):
    u = random_unitary(dim, counter_rng(seed))
    assert max_norm(u.conj().T @ u - np.eye(dim)) < 1e-12


@given(seeds, st.integers(min_value=2, max_value=5))
def test_eigen_ensemble_rebuilds_the_mixture(seed, dim):
    rng = counter_rng(seed)
    space = HilbertSpace.standard(dim)
    rho = random_density(space, rng, rank=2)
    rebuilt = sum(p * v.density().matrix for p, v in rho.eigen_ensemble())
    assert max_norm(rebuilt - rho.matrix) < 1e-10


def test_phase_equality_ignores_global_phase():
    v = random_unit_vector(4, counter_rng(3))
    assert equal_up_to_phase(v, np.exp(0.7j) * v)
    assert not equal_up_to_phase(v, np.roll(v, 1))


def test_mixture_weights_must_match_states():
    space = HilbertSpace.standard(2)
    with pytest.raises(LinalgError):
        DensityOperator.mixture(space, [1.0], [])
    rho = DensityOperator.maximally_mixed(space)
    assert rho.purity() == pytest.approx(0.5)
