import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.descriptions import random_separated_instance
from src.linalg_core import DensityOperator, HermitianObservable, HilbertSpace, max_norm
from src.meter import (
    IN_DOMAIN,
    NULL,
    PARTIAL,
    BorelSet,
    MeterError,
    SpectralMeasure,
    amplitude_bound_predicate,
    binomial_bound,
    build_meter,
    classify_state,
    coarse_grain,
    detector_grid_meter,
    find_nonclosure_witness,
    outcome_effects,
    postselected_distribution,
    registered_distribution,
    sample_registrations,
    threshold_meter,
    truncated_effect,
)
from src.utils import counter_rng

from .conftest import basis, state

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _diag_obs(values):
    return HermitianObservable.diagonal(values)


def test_borel_sets_are_sorted_and_merged():
    cell = BorelSet(((3, 4), (0, 1), (0.5, 2), (5, 5)))
    assert cell.intervals == ((0.0, 2.0), (3.0, 4.0))
    assert cell.contains(1.5) and not cell.contains(2.0)
    rest = cell.complement()
    assert rest.contains(2.5) and rest.contains(-10) and not rest.contains(1.0)
    assert BorelSet().is_empty
    assert cell.intersects(BorelSet.interval(3.5, 10))
    with pytest.raises(MeterError):
        BorelSet(((math.nan, 1.0),))


def test_spectral_measure_is_normalized():
    measure = SpectralMeasure.of(_diag_obs([1.0, 2.0, 2.0, 3.0]))
    assert measure.outcomes == pytest.approx((1.0, 2.0, 3.0))
    assert measure.normalization_defect() < 1e-12
    assert max_norm(measure.projector(BorelSet.interval(1.5, 2.5)) - np.diag([0, 1, 1, 0])) < 1e-12


def test_complete_meter_registers_everything():
    meter = build_meter(_diag_obs([1.0, 2.0, 3.0]))
    assert meter.is_complete
    dist = registered_distribution(meter, state([1, 1, 1]).density())
    assert dist.no_response == pytest.approx(0.0, abs=1e-12)
    assert dist.probabilities == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    assert dist.probability_of(2.0) == pytest.approx(1 / 3)
    with pytest.raises(KeyError):
        dist.probability_of(7.0)


def test_incomplete_meter_sends_unregistered_weight_to_no_response():
    meter = build_meter(_diag_obs([1.0, 2.0, 3.0]), registered=[2])
    assert not meter.is_complete
    dist = registered_distribution(meter, basis(3, 0).density())
    assert dist.registered_weight == pytest.approx(0.0, abs=1e-12)
    assert dist.no_response == pytest.approx(1.0)


def test_build_meter_argument_errors():
    obs = _diag_obs([1.0, 2.0])
    with pytest.raises(MeterError):
        build_meter(obs, registered=[0], pi_ss=np.eye(2))
    with pytest.raises(MeterError):
        build_meter(obs, registered=[0, 0])
    with pytest.raises(MeterError):
        build_meter(obs, registered=[5])
    with pytest.raises(MeterError):
        build_meter(obs, pi_ss=np.diag([1.0, 0.5]))


def test_classification():
    meter = build_meter(_diag_obs([1.0, 2.0, 3.0]), registered=[1, 2])
    assert classify_state(meter, basis(3, 2).density()) == IN_DOMAIN
    assert classify_state(meter, basis(3, 0).density()) == NULL
    assert classify_state(meter, state([1, 0, 1]).density()) == PARTIAL


def test_domain_predicate_narrows_the_domain():
    meter = build_meter(
        _diag_obs([1.0, 2.0, 3.0]),
        registered=[1, 2],
        domain_predicate=amplitude_bound_predicate([1], 0.2),
    )
    assert classify_state(meter, basis(3, 2).density()) == IN_DOMAIN
    assert classify_state(meter, basis(3, 1).density()) == PARTIAL


def test_amplitude_bound_is_not_closed_under_superposition():
    predicate = amplitude_bound_predicate([0], 0.31)
    witness = find_nonclosure_witness(3, predicate)
    assert witness is not None
    psi, phi = witness
    combo = (psi + phi) / math.sqrt(2.0)
    assert predicate(psi) and predicate(phi)
    assert not predicate(combo)
    assert predicate.superposition_bound(psi, phi, 1 / math.sqrt(2.0), 1 / math.sqrt(2.0))


def test_predicate_on_mixed_states_uses_the_diagonal():
    predicate = amplitude_bound_predicate([0], 0.3)
    space = HilbertSpace.standard(2)
    rho = DensityOperator.mixture(space, [0.2, 0.8], [basis(2, 0), basis(2, 1)])
    assert predicate(rho)
    with pytest.raises(MeterError):
        amplitude_bound_predicate([0], 0.0)


def test_threshold_meter():
    meter = threshold_meter(_diag_obs([1.0, 2.0, 3.0]), 2.0)
    assert max_norm(meter.pi_ss - np.diag([0, 1, 1])) < 1e-12


def test_coarse_graining_drops_empty_cells_and_rejects_overlaps():
    measure = SpectralMeasure.of(_diag_obs([0.0, 1.0, 5.0]))
    cells = [BorelSet.interval(-1, 0.5), BorelSet.interval(0.5, 3), BorelSet.interval(3, 4), BorelSet.interval(4, 10)]
    coarse = coarse_grain(measure, cells)
    assert coarse.outcomes == (1.0, 2.0, 4.0)
    with pytest.raises(MeterError):
        coarse_grain(measure, [BorelSet.interval(-1, 2), BorelSet.interval(1, 10)])
    with pytest.raises(MeterError):
        coarse_grain(measure, [BorelSet.interval(-1, 2)])


@given(seeds, st.integers(min_value=2, max_value=5))
def test_truncated_effects_sum_to_the_registered_projector(seed, dim):
    meter = random_separated_instance(dim, 1, 1, counter_rng(seed)).meter
    total = sum(e.matrix for e in outcome_effects(meter))
    assert max_norm(total - meter.pi_ss) < 1e-10


def test_detector_grid_probabilities():
    space = HilbertSpace.standard(64)
    meter = detector_grid_meter(space, [(0, 16), (32, 48)])
    assert meter.labels == ("D1", "D2", "remainder")
    amps = np.zeros(64)
    amps[4:12] = 1.0
    dist = registered_distribution(meter, state(amps).density())
    assert dist.as_dict()["D1"] == pytest.approx(1.0)
    assert dist.as_dict()["D2"] == pytest.approx(0.0, abs=1e-12)
    assert dist.as_dict()["remainder"] == pytest.approx(0.0, abs=1e-12)
    assert postselected_distribution(dist)["D1"] == pytest.approx(1.0)


def test_wave_packet_between_detectors_is_never_registered():
    meter = detector_grid_meter(HilbertSpace.standard(64), [(0, 16), (32, 48)])
    amps = np.zeros(64)
    amps[20:28] = 1.0
    rho = state(amps).density()
    assert classify_state(meter, rho) == NULL
    dist = registered_distribution(meter, rho)
    assert dist.no_response == pytest.approx(1.0)
    with pytest.raises(MeterError):
        postselected_distribution(dist)


def test_detector_cells_must_fit_and_be_disjoint():
    space = HilbertSpace.standard(8)
    with pytest.raises(MeterError):
        detector_grid_meter(space, [(0, 4), (3, 6)])
    with pytest.raises(MeterError):
        detector_grid_meter(space, [(6, 10)])


def test_sampling_is_reproducible_and_thread_independent():
    meter = build_meter(_diag_obs([1.0, 2.0, 3.0]), registered=[1, 2])
    rho = state([1, 1, 1]).density()
    a = sample_registrations(meter, rho, 5000, seed=7, block_size=300, threads=1)
    b = sample_registrations(meter, rho, 5000, seed=7, block_size=300, threads=4)
    c = sample_registrations(meter, rho, 5000, seed=8, block_size=300, threads=1)
    assert a == b
    assert a.counts != c.counts
    assert sum(a.counts) + a.no_response == 5000
    assert a.rows()[-1][0] == "no_response"


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_frequencies_converge_within_the_binomial_bound(seed):
    meter = build_meter(_diag_obs([1.0, 2.0, 3.0]), registered=[0, 2])
    rho = state([1, 2, 3]).density()
    dist = registered_distribution(meter, rho)
    record = sample_registrations(meter, rho, 20000, seed=seed)
    for label, p in dist.as_dict().items():
        assert abs(record.frequency_of(label) - p) <= binomial_bound(p, 20000, 5.0) + 1e-12


@pytest.mark.parametrize("p", [0.1, 0.25, 0.5])
def test_frequency_of_a_born_probability_within_four_sigma(p):
    meter = build_meter(_diag_obs([1.0, 2.0]))
    rho = state([math.sqrt(p), math.sqrt(1.0 - p)]).density()
    label = registered_distribution(meter, rho).labels[0]
    assert registered_distribution(meter, rho).as_dict()[label] == pytest.approx(p)
    record = sample_registrations(meter, rho, 100_000, seed=2024)
    assert abs(record.frequency_of(label) - p) <= binomial_bound(p, 100_000, 4.0)
    assert sample_registrations(meter, rho, 100_000, seed=2024).counts == record.counts


def test_sampling_rejects_nonpositive_shots():
    meter = build_meter(_diag_obs([1.0, 2.0]))
    with pytest.raises(MeterError):
        sample_registrations(meter, basis(2, 0).density(), 0, seed=1)


def test_truncated_effect_examples():
    observable = HermitianObservable.diagonal([1.0, 2.0, 3.0, 4.0])
    complete = build_meter(observable)
    cell = BorelSet.interval(1.5, 3.5)
    assert np.allclose(truncated_effect(complete, cell).matrix, np.diag([0, 1, 1, 0]))

    model = build_meter(observable, registered=[0, 1])
    assert np.allclose(truncated_effect(model, BorelSet.interval(1.5, 2.5)).matrix, np.diag([0, 1, 0, 0]))
    assert np.allclose(truncated_effect(model, BorelSet.interval(2.5, 4.5)).matrix, 0)
    assert np.allclose(truncated_effect(model, BorelSet.real_line()).matrix, model.pi_ss)
