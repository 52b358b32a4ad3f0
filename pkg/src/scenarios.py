"""
Scenario engine: builds the objects a ScenarioConfig describes, routes every
preparation through the separation-status gate, runs the checks for the
scenario kind and collects them into a Report.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .audit_logger import AuditLogger
from .config_loader import EnvironmentSpec, ScenarioConfig, StateSpec, SweepSpec
from .descriptions import (
    RecoveryDegenerate,
    born_equivalence_report,
    first_way,
    idempotency_counterexample,
    idempotency_defect,
    random_separated_instance,
    recover_first,
    second_way,
    secondway_projector,
    working_sector_basis,
)
from .dynamics import build_hamiltonian, compatibility_report, evolve, evolve_expm
from .fock import (
    FockSpace,
    additive_fock_observable,
    check_ccr,
    fock_expectation,
    registered_fock_observable,
    to_fock,
    two_lab_state,
)
from .linalg_core import (
    DensityOperator,
    HermitianObservable,
    HilbertSpace,
    LinalgError,
    StateVector,
    max_norm,
    random_hermitian,
    random_unitary,
)
from .meter import (
    NULL,
    SAMPLING_FLOOR,
    Meter,
    amplitude_bound_predicate,
    binomial_bound,
    build_meter,
    classify_state,
    detector_grid_meter,
    outcome_effects,
    registered_distribution,
    sample_registrations,
    threshold_meter,
)
from .metrics_exporter import MetricsExporter
from .multiparticle import (
    MultiState,
    additive_embed,
    cyclic_expansion,
    single_particle_support,
    tensor_and_symmetrize,
)
from .report import Report
from .separation import (
    Environment,
    EnvironmentObject,
    PreparationViolation,
    SeparationReport,
    contraction_norm,
    contraction_residual,
    environment_noise,
    has_separation_status,
    require_separation_status,
)
from .utils import counter_rng, derive_seed, thread_cap


_LOGGER = logging.getLogger(__name__)

DEMONSTRATION_THRESHOLD = 0.01
IDEMPOTENCY_TOL = 1e-10
SYMMETRY_TOL = 1e-10
CONSTANCY_TOL = 1e-9
EXACT_TOL = 1e-12
SWEEP_TIMES = tuple(np.linspace(0.0, 1.0, 20))


class ScenarioError(RuntimeError):
    """A module error raised while running a scenario, with the failing step."""


@dataclass
class ScenarioContext:
    cfg: ScenarioConfig
    report: Report
    audit: Optional[AuditLogger] = None
    metrics: Optional[MetricsExporter] = None
    step: str = "setup"
    threads: Optional[int] = None


def _space(cfg: ScenarioConfig) -> HilbertSpace:
    return HilbertSpace.standard(cfg.dim)


def _state(spec: StateSpec, space: HilbertSpace) -> StateVector:
    return StateVector(space, spec.vector(space.dim))


def _prepared(cfg: ScenarioConfig, space: HilbertSpace) -> Union[StateVector, DensityOperator]:
    if cfg.prepared_mixture:
        weights = np.array([w for w, _ in cfg.prepared_mixture])
        states = [_state(spec, space) for _, spec in cfg.prepared_mixture]
        return DensityOperator.mixture(space, weights / weights.sum(), states)
    if cfg.prepared is None:
        raise ScenarioError(f"{cfg.kind}: no prepared state configured")
    return _state(cfg.prepared, space)


def _factors(spec: EnvironmentSpec, space: HilbertSpace) -> List[StateVector]:
    if spec.modes is not None:
        return [StateVector.basis(space, m) for m in spec.modes]
    return [_state(f, space) for f in spec.factors or ()]


def _environment(cfg: ScenarioConfig, space: HilbertSpace) -> Environment:
    return Environment(
        tuple(
            EnvironmentObject.symmetrized(spec.label, _factors(spec, space), cfg.tau)
            for spec in cfg.environment
        )
    )


def _env_state(cfg: ScenarioConfig, space: HilbertSpace) -> MultiState:
    state, _ = tensor_and_symmetrize(_factors(cfg.environment[0], space), cfg.tau)
    return state


def _observable(cfg: ScenarioConfig, space: HilbertSpace) -> HermitianObservable:
    if cfg.observable is None:
        return HermitianObservable.diagonal(np.arange(space.dim, dtype=float), space)
    return HermitianObservable(space, cfg.observable)


def _meter(cfg: ScenarioConfig, space: HilbertSpace) -> Meter:
    spec = cfg.meter
    if spec.detectors is not None:
        meter = detector_grid_meter(space, spec.detectors, spec.name)
    elif spec.threshold is not None:
        meter = threshold_meter(_observable(cfg, space), spec.threshold, spec.name)
    elif spec.registered is not None:
        pi_ss = np.zeros((space.dim, space.dim), dtype=complex)
        for i in spec.registered:
            pi_ss[i, i] = 1.0
        meter = build_meter(_observable(cfg, space), pi_ss=pi_ss, name=spec.name)
    elif spec.registered_eigen is not None:
        meter = build_meter(_observable(cfg, space), registered=spec.registered_eigen, name=spec.name)
    else:
        meter = build_meter(_observable(cfg, space), name=spec.name)
    if spec.eps_prime is not None:
        predicate = amplitude_bound_predicate(spec.forbidden, spec.eps_prime)
        meter = dataclasses.replace(meter, domain_predicate=predicate)
    return meter


def _has_meter_selector(cfg: ScenarioConfig) -> bool:
    spec = cfg.meter
    return any(
        x is not None for x in (spec.registered, spec.registered_eigen, spec.threshold, spec.detectors)
    )


def _gate(
    ctx: ScenarioContext, prepared: Union[StateVector, DensityOperator], env: Environment
) -> SeparationReport:
    ctx.step = "preparation_gate"
    cfg = ctx.cfg
    tol = cfg.tolerances.separation
    try:
        result = require_separation_status(prepared, env, tol, cfg.allow_violation)
    except PreparationViolation as exc:
        if ctx.audit:
            ctx.audit.log_preparation_gate(cfg.kind, exc.report.to_dict(), cfg.allow_violation)
        raise
    if ctx.audit:
        ctx.audit.log_preparation_gate(cfg.kind, result.to_dict(), cfg.allow_violation)
    ctx.report.results["preparation_gate"] = result.to_dict()
    if result.passed:
        ctx.report.add_check(
            "preparation_gate", True, result.max_residual, tol, note=f"{len(env)} environment objects"
        )
    else:
        ctx.report.add_demonstration(
            "preparation_gate", result.max_residual, tol, cfg.expect_violation, tol
        )
    return result


def _overlap_deviation(u: np.ndarray, v: np.ndarray) -> float:
    return max(0.0, 1.0 - abs(complex(np.vdot(u, v))))


def _run_two_lab(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    assert cfg.observable is not None and cfg.labs is not None
    o = np.real(np.diag(cfg.observable))
    k, l = cfg.labs
    tol = cfg.tolerances.identity

    ctx.step = "fock_expectation"
    fock = FockSpace.for_particles(cfg.dim, cfg.tau, 2)
    state = two_lab_state(fock, k, l)
    value = fock_expectation(state, additive_fock_observable(fock, o))
    expected = float(o[k] + o[l])
    deviation = abs(value - expected)
    report.add_check(
        "two_lab_expectation",
        deviation < tol * max(1.0, abs(expected)),
        value,
        tol,
        deviation,
        "expectation equals o_k + o_l",
    )
    report.results["two_lab"] = {"expectation": value, "local": float(o[k]), "remote": float(o[l])}
    report.verdicts["complete_meter"] = (
        "noise: remote mode contributes" if abs(o[l]) > 0 else "remote mode carries zero weight"
    )

    ctx.step = "ccr"
    worst = max(check_ccr(fock, r, s) for r in range(cfg.dim) for s in range(cfg.dim))
    report.add_deviation_check("ccr", worst, tol)

    ctx.step = "isomorphism"
    space = _space(cfg)
    wave, _ = tensor_and_symmetrize([StateVector.basis(space, k), StateVector.basis(space, l)], cfg.tau)
    wave_value = additive_embed(np.diag(o).astype(complex), 2).expectation(wave)
    image = to_fock(wave, fock)
    iso_dev = max(abs(wave_value - value), _overlap_deviation(image.amplitudes, state.amplitudes))
    report.add_deviation_check("isomorphism_consistency", iso_dev, 1e-10)

    if not _has_meter_selector(cfg):
        return

    ctx.step = "incomplete_meter"
    meter = _meter(cfg, space)
    psi = _state(cfg.prepared, space) if cfg.prepared else StateVector.basis(space, k)
    remote = EnvironmentObject.symmetrized("remote_lab", [StateVector.basis(space, l)], cfg.tau)
    env = Environment((remote,) + _environment(cfg, space).objects)
    _gate(ctx, psi, env)

    dist = registered_distribution(meter, psi.density())
    seen = meter.pi_ss @ psi.amplitudes
    oracle = [
        float(np.linalg.norm(proj @ seen) ** 2)
        for proj in meter.measure.decomposition.eigenprojectors
    ]
    born_dev = max(abs(p - q) for p, q in zip(dist.probabilities, oracle))
    born_dev = max(born_dev, abs(dist.no_response - (1.0 - float(np.linalg.norm(seen) ** 2))))
    report.add_deviation_check("registered_born", born_dev, tol)
    report.results["registered_distribution"] = dist.as_dict()

    registered = [i for i in range(cfg.dim) if abs(meter.pi_ss[i, i]) > 0.5]
    reg_value = fock_expectation(state, registered_fock_observable(fock, o, registered))
    reg_expected = float(sum(o[n] for n in (k, l) if n in registered))
    report.add_check(
        "registered_fock_expectation",
        abs(reg_value - reg_expected) < tol * max(1.0, abs(reg_expected)),
        reg_value,
        tol,
        abs(reg_value - reg_expected),
    )
    report.verdicts["incomplete_meter"] = (
        "remote mode registered" if l in registered else "no remote contribution"
    )

    noise = environment_noise(meter, env)
    report.add_deviation_check("environment_noise", noise, cfg.tolerances.separation)
    report.verdicts["domain"] = classify_state(meter, psi.density())


def _run_detector_grid(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    assert cfg.meter.detectors is not None
    space = _space(cfg)
    ctx.step = "meter"
    meter = _meter(cfg, space)
    prepared = _prepared(cfg, space)
    _gate(ctx, prepared, _environment(cfg, space))
    rho = prepared if isinstance(prepared, DensityOperator) else prepared.density()
    weights = np.real(np.diag(rho.matrix))

    ctx.step = "registered_distribution"
    dist = registered_distribution(meter, rho)
    oracle = [float(weights[a:b].sum()) for a, b in cfg.meter.detectors]
    dev = max(abs(dist.probabilities[i] - p) for i, p in enumerate(oracle))
    dev = max(dev, abs(dist.no_response - (1.0 - sum(oracle))))
    report.add_deviation_check("detector_probabilities", dev, cfg.tolerances.identity * 10)
    report.results["registered_distribution"] = dist.as_dict()

    total = sum(e.matrix for e in outcome_effects(meter))
    report.add_deviation_check("truncated_povm_normalization", max_norm(total - meter.pi_ss), 1e-10)

    domain = classify_state(meter, rho)
    report.verdicts["domain"] = domain
    if domain == NULL:
        report.verdicts["born_zero"] = "P(D) = 0 for every detector"

    ctx.step = "sampling"
    record = sample_registrations(meter, rho, cfg.shots, cfg.seed, threads=ctx.threads)
    if ctx.metrics:
        ctx.metrics.add_shots(cfg.kind, cfg.shots)
    probabilities = dict(zip(dist.labels, dist.probabilities))
    probabilities["no_response"] = dist.no_response
    worst, within = 0.0, True
    for label, p in probabilities.items():
        gap = abs(record.frequency_of(label) - p)
        worst = max(worst, gap)
        within = within and gap <= binomial_bound(p, cfg.shots, cfg.tolerances.sigmas) + SAMPLING_FLOOR
    report.add_check(
        "frequency_convergence",
        within,
        worst,
        None,
        worst,
        f"{cfg.tolerances.sigmas:g}-sigma binomial bound at {cfg.shots} shots",
    )
    report.add_table("frequencies.csv", ("outcome", "count", "frequency"), record.rows())
    report.sidecars["frequencies.meta.json"] = record.metadata()


def _separated_support(env: MultiState, psi: StateVector) -> bool:
    support = single_particle_support(env)
    return not support.size or max_norm(support.conj().T @ psi.amplitudes) < 1e-10


def _run_equivalence_instance(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    space = _space(cfg)
    env_state = _env_state(cfg, space)
    psi = _state(cfg.prepared, space)
    meter = _meter(cfg, space)
    _gate(ctx, psi, _environment(cfg, space))
    n = env_state.n_particles
    tol = cfg.tolerances.equivalence
    separated = _separated_support(env_state, psi)

    ctx.step = "second_way"
    fw = first_way(env_state, psi)
    sw = second_way(env_state, psi)
    cyc = cyclic_expansion(env_state, psi)
    report.add_deviation_check("cyclic_expansion", _overlap_deviation(cyc.amplitudes, sw.vector), 1e-10)
    report.results["normalization"] = {"n_exch": sw.n_exch, "n_prime": sw.n_prime}
    if separated:
        report.add_deviation_check(
            "normalization_factor", abs(sw.n_prime - 1.0 / math.sqrt(n + 1)), 1e-10
        )

    ctx.step = "recover_first"
    try:
        recovered = recover_first(sw)
        round_trip = _overlap_deviation(recovered.vector, fw.vector)
    except RecoveryDegenerate:
        recovered = None
        round_trip = 1.0
    report.results["round_trip_deviation"] = round_trip
    if recovered is not None and recovered.separated is False:
        report.verdicts["recover_first"] = recovered.reason or "recovered state is not Ψ ⊗ ψ"
    if separated:
        report.add_deviation_check("round_trip", round_trip, tol)
    if separated and recovered is not None:
        assert recovered.nu is not None
        report.add_deviation_check("recovery_normalization", abs(recovered.nu - math.sqrt(n + 1)), 1e-10)
        other = recover_first(sw, slot=0)
        report.add_deviation_check(
            "slot_covariance", _overlap_deviation(other.vector, recovered.vector), EXACT_TOL
        )

    ctx.step = "born_equivalence"
    born = born_equivalence_report(env_state, psi, meter)
    report.results["born_equivalence"] = born.to_dict()
    report.add_table(
        "equivalence.csv",
        ("k", "first_way", "second_way", "deviation"),
        [(r.k, r.first_way, r.second_way, r.deviation) for r in born.rows],
    )
    if born.hypothesis_violated:
        report.verdicts["hypotheses"] = "; ".join(born.reasons)
        report.add_demonstration(
            "born_equivalence", born.max_deviation, DEMONSTRATION_THRESHOLD, cfg.expect_violation, tol
        )
        return
    report.add_deviation_check("born_equivalence", born.max_deviation, tol)

    ctx.step = "secondway_projector"
    basis = working_sector_basis(env_state, meter.pi_ss, cfg.tau)
    projections = meter.measure.decomposition.eigenprojectors
    active = [k for k, p in enumerate(projections) if max_norm(p @ meter.pi_ss) > 1e-10]
    ops = [secondway_projector(k, meter, n) for k in active]
    worst = max((idempotency_defect(op, basis) for op in ops), default=0.0)
    report.add_deviation_check("secondway_projector_idempotent", worst, IDEMPOTENCY_TOL)
    if ops:
        summed = sum(op.matrix for op in ops)
        counter = additive_embed(meter.pi_ss, n + 1).matrix
        report.add_deviation_check(
            "secondway_projector_resolution", max_norm((summed - counter) @ basis), IDEMPOTENCY_TOL
        )
    off = max((idempotency_counterexample(op, cfg.tau)[1] for op in ops), default=0.0)
    report.results["secondway_projector_off_sector"] = off
    report.verdicts["secondway_projector_off_sector"] = (
        "not a projection off the working sector" if off > 0.1 else "no off-sector counterexample"
    )


def _pick_shape(rng: np.random.Generator, sweep: SweepSpec) -> Tuple[int, int, int]:
    n = int(rng.integers(1, sweep.max_env + 1))
    tau = 1 if rng.random() < 0.5 else -1
    low = n + 1 if tau == -1 else 2
    if low > sweep.max_dim:
        tau, low = 1, 2
    d = int(rng.integers(low, sweep.max_dim + 1))
    return d, n, tau


def _equivalence_trial(index: int, sweep: SweepSpec) -> Dict[str, Any]:
    seed = derive_seed(sweep.master_seed, index)
    rng = counter_rng(seed)
    d, n, tau = _pick_shape(rng, sweep)
    inst = random_separated_instance(d, n, tau, rng)
    fw = first_way(inst.env, inst.psi)
    sw = second_way(inst.env, inst.psi)
    recovered = recover_first(sw)
    born = born_equivalence_report(inst.env, inst.psi, inst.meter)
    return {
        "trial": index,
        "seed": seed,
        "dim": d,
        "n_env": n,
        "tau": tau,
        "round_trip": _overlap_deviation(recovered.vector, fw.vector),
        "n_prime": abs(sw.n_prime - 1.0 / math.sqrt(n + 1)),
        "born": born.max_deviation,
        "violated": born.hypothesis_violated,
    }


def _dynamics_trial(index: int, sweep: SweepSpec) -> Dict[str, Any]:
    seed = derive_seed(sweep.master_seed, index)
    rng = counter_rng(seed)
    d, n, tau = _pick_shape(rng, sweep)
    inst = random_separated_instance(d, n, tau, rng)
    p = inst.meter.pi_ss
    q = np.eye(d) - p
    h = p @ random_hermitian(d, rng) @ p + q @ random_hermitian(d, rng) @ q
    v = None
    if rng.random() < 0.5:
        v = p @ random_hermitian(d, rng) @ p + q @ random_hermitian(d, rng) @ q
    ham = build_hamiltonian(h, n + 1, v)
    rep = compatibility_report(ham, inst.env, inst.psi, SWEEP_TIMES, p)
    return {
        "trial": index,
        "seed": seed,
        "dim": d,
        "n_env": n,
        "tau": tau,
        "deviation": rep.max_deviation,
        "symmetry_defect": max(r.symmetry_defect for r in rep.rows),
        "status_drift": rep.status_weight_drift,
        "violated": rep.hypothesis_violated,
    }


def _run_trials(
    trial: Callable[[int, SweepSpec], Dict[str, Any]], sweep: SweepSpec, threads: Optional[int] = None
) -> List[Dict[str, Any]]:
    with ThreadPoolExecutor(max_workers=max(1, min(threads or thread_cap(), sweep.trials))) as pool:
        return list(pool.map(lambda i: trial(i, sweep), range(sweep.trials)))


def hypothesis_violation_demo(tau: int = 1) -> float:
    """
    Environment particle inside the registered subspace (Ψ = ψ = e1 at d=3,
    H_ss = span{e1, e2}): returns the Born discrepancy between descriptions.
    """
    space = HilbertSpace.standard(3)
    meter = build_meter(HermitianObservable.diagonal([1.0, 2.0, 3.0], space), registered=[1, 2])
    psi = StateVector.basis(space, 1)
    env_state, _ = tensor_and_symmetrize([psi], tau)
    return born_equivalence_report(env_state, psi, meter).max_deviation


def status_breaking_demo(times: Sequence[float] = SWEEP_TIMES) -> float:
    """
    d=3, N=1, Ψ=e0, ψ=e1, H_ss=span{e1, e2}, one-body h coupling e0 and e1:
    returns the largest trajectory deviation.
    """
    space = HilbertSpace.standard(3)
    h = np.zeros((3, 3), dtype=complex)
    h[0, 1] = h[1, 0] = 1.0
    pi_ss = np.diag([0.0, 1.0, 1.0]).astype(complex)
    env_state, _ = tensor_and_symmetrize([StateVector.basis(space, 0)], 1)
    rep = compatibility_report(
        build_hamiltonian(h, 2), env_state, StateVector.basis(space, 1), times, pi_ss
    )
    return rep.max_deviation


def _run_equivalence(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    if cfg.sweep is None or (cfg.prepared is not None and cfg.environment):
        _run_equivalence_instance(ctx)
    if cfg.sweep is None:
        return
    ctx.step = "sweep"
    rows = _run_trials(_equivalence_trial, cfg.sweep, ctx.threads)
    tol = cfg.tolerances.equivalence
    report.add_deviation_check("sweep_round_trip", max(r["round_trip"] for r in rows), tol)
    report.add_deviation_check("sweep_normalization_factor", max(r["n_prime"] for r in rows), 1e-10)
    report.add_deviation_check("sweep_born_equivalence", max(r["born"] for r in rows), tol)
    report.add_check(
        "sweep_hypotheses_hold", not any(r["violated"] for r in rows), note=f"{len(rows)} trials"
    )
    demo = hypothesis_violation_demo(cfg.tau)
    report.add_check("constructed_violation", demo > DEMONSTRATION_THRESHOLD, demo, DEMONSTRATION_THRESHOLD)
    report.verdicts["constructed_violation"] = "violation demonstrated"
    report.add_table(
        "sweep.csv",
        ("trial", "seed", "dim", "n_env", "tau", "round_trip", "n_prime", "born"),
        [tuple(r[c] for c in ("trial", "seed", "dim", "n_env", "tau", "round_trip", "n_prime", "born")) for r in rows],
    )


def _run_dynamics_instance(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    assert cfg.hamiltonian is not None
    space = _space(cfg)
    env_state = _env_state(cfg, space)
    psi = _state(cfg.prepared, space)
    meter = _meter(cfg, space)
    _gate(ctx, psi, _environment(cfg, space))
    n = env_state.n_particles

    ctx.step = "hamiltonian"
    ham = build_hamiltonian(cfg.hamiltonian.h, n + 1, cfg.hamiltonian.v)
    fw = first_way(env_state, psi)
    t_max = max(cfg.times)
    unitarity = max(abs(np.linalg.norm(evolve(ham, fw, t)) - 1.0) for t in cfg.times)
    report.add_deviation_check("unitarity", unitarity, 1e-10)
    report.add_deviation_check(
        "propagator_consistency",
        max_norm(evolve(ham, fw, t_max) - evolve_expm(ham, fw.vector, t_max)),
        1e-10,
    )
    half = evolve(ham, evolve(ham, fw, t_max / 2), t_max / 2)
    report.add_deviation_check("propagator_composition", max_norm(half - evolve(ham, fw, t_max)), 1e-10)

    ctx.step = "compatibility"
    rep = compatibility_report(ham, env_state, psi, cfg.times, meter.pi_ss)
    report.results["compatibility"] = rep.to_dict()
    report.add_table(
        "compatibility.csv",
        ("t", "deviation", "status_preserved"),
        [(r.t, r.deviation, r.status_preserved) for r in rep.rows],
    )
    if rep.status_lost_at:
        report.verdicts["status_lost"] = f"status projection vanished at t = {list(rep.status_lost_at)}"
    if rep.hypothesis_violated:
        report.verdicts["dynamics"] = "status-changing process: second-way equation must be used"
        report.add_demonstration(
            "compatibility",
            rep.max_deviation,
            DEMONSTRATION_THRESHOLD,
            cfg.expect_violation,
            cfg.tolerances.compatibility,
        )
        return
    report.verdicts["dynamics"] = "status preserved"
    report.add_deviation_check("compatibility", rep.max_deviation, cfg.tolerances.compatibility)
    report.add_deviation_check(
        "symmetry_preserved", max(r.symmetry_defect for r in rep.rows), SYMMETRY_TOL
    )
    report.add_deviation_check("status_projector_constancy", rep.status_weight_drift, CONSTANCY_TOL)


def _run_dynamics(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    if cfg.sweep is None or (cfg.hamiltonian is not None and cfg.prepared is not None and cfg.environment):
        _run_dynamics_instance(ctx)
    if cfg.sweep is None:
        return
    ctx.step = "sweep"
    rows = _run_trials(_dynamics_trial, cfg.sweep, ctx.threads)
    report.add_deviation_check(
        "sweep_compatibility", max(r["deviation"] for r in rows), cfg.tolerances.compatibility
    )
    report.add_deviation_check(
        "sweep_symmetry_preserved", max(r["symmetry_defect"] for r in rows), SYMMETRY_TOL
    )
    report.add_deviation_check(
        "sweep_status_projector_constancy", max(r["status_drift"] for r in rows), CONSTANCY_TOL
    )
    demo = status_breaking_demo()
    report.add_check(
        "constructed_status_breaking", demo > DEMONSTRATION_THRESHOLD, demo, DEMONSTRATION_THRESHOLD
    )
    report.verdicts["constructed_status_breaking"] = "violation demonstrated"
    report.add_table(
        "sweep.csv",
        ("trial", "seed", "dim", "n_env", "tau", "deviation", "symmetry_defect", "status_drift"),
        [
            tuple(r[c] for c in ("trial", "seed", "dim", "n_env", "tau", "deviation", "symmetry_defect", "status_drift"))
            for r in rows
        ],
    )


def _rotate(prepared: Union[StateVector, DensityOperator], unitary: np.ndarray) -> Union[StateVector, DensityOperator]:
    if isinstance(prepared, DensityOperator):
        return DensityOperator(prepared.space, unitary @ prepared.matrix @ unitary.conj().T)
    return StateVector.from_amplitudes(prepared.space, unitary @ prepared.amplitudes)


def _run_separation_check(ctx: ScenarioContext) -> None:
    cfg, report = ctx.cfg, ctx.report
    space = _space(cfg)
    prepared = _prepared(cfg, space)
    env = _environment(cfg, space)
    result = _gate(ctx, prepared, env)
    report.results["separation"] = result.to_dict()
    report.add_table(
        "separation.csv",
        ("label", "residual", "verdict", "tolerance"),
        [(r.label, r.residual, "separated" if r.separated else "overlapping", r.tolerance) for r in result.objects],
    )

    ctx.step = "basis_independence"
    unitary = random_unitary(cfg.dim, counter_rng(cfg.seed))
    moved_prepared, moved_env = _rotate(prepared, unitary), env.rotate(unitary)
    rotated = has_separation_status(moved_prepared, moved_env, result.tolerance)
    gap = max(
        (
            abs(contraction_norm(a, prepared) - contraction_norm(b, moved_prepared))
            for a, b in zip(env.objects, moved_env.objects)
        ),
        default=0.0,
    )
    same = all(a.separated == b.separated for a, b in zip(result.objects, rotated.objects))
    report.add_check("basis_independence", same and gap < 1e-12, gap, 1e-12, gap)

    if isinstance(prepared, StateVector):
        ctx.step = "primed_slot_invariance"
        spread = 0.0
        for obj in env.objects:
            values = [contraction_residual(obj, prepared, slot) for slot in range(obj.n_particles)]
            spread = max(spread, max(values) - min(values))
        report.add_deviation_check("primed_slot_invariance", spread, EXACT_TOL)

    if _has_meter_selector(cfg):
        ctx.step = "environment_noise"
        noise = environment_noise(_meter(cfg, space), env)
        report.results["environment_noise"] = noise
        report.verdicts["environment_noise"] = (
            "environment in the meter's null set" if noise < cfg.tolerances.separation else "meter sees environment particles"
        )


RUNNERS: Dict[str, Callable[[ScenarioContext], None]] = {
    "two_lab": _run_two_lab,
    "detector_grid": _run_detector_grid,
    "equivalence": _run_equivalence,
    "dynamics": _run_dynamics,
    "separation_check": _run_separation_check,
}


def run_scenario(
    cfg: ScenarioConfig,
    audit: Optional[AuditLogger] = None,
    metrics: Optional[MetricsExporter] = None,
    threads: Optional[int] = None,
) -> Report:
    """
    Run one scenario. Deterministic for a fixed (config, seed); the only
    non-deterministic field, ``duration_ms``, stays out of ``report.json``.
    ``threads`` caps the worker pools the scenario opens (default: IMLAB_THREADS).
    """
    report = Report(
        kind=cfg.kind, name=cfg.name, config=cfg.raw, config_hash=cfg.config_hash, seed=cfg.seed
    )
    ctx = ScenarioContext(cfg, report, audit, metrics, threads=threads)
    if audit:
        audit.log_scenario_started(cfg.kind, cfg.config_hash, cfg.seed)
    _LOGGER.info("Running %s scenario %r (seed=%d)", cfg.kind, cfg.name, cfg.seed)
    start = time.perf_counter()
    try:
        RUNNERS[cfg.kind](ctx)
    except (PreparationViolation, ScenarioError):
        raise
    except (LinalgError, ValueError, IndexError, ArithmeticError) as exc:
        raise ScenarioError(f"{cfg.kind}: step {ctx.step!r} failed: {exc}") from exc
    elapsed = time.perf_counter() - start
    report.duration_ms = elapsed * 1000.0

    for check in report.checks:
        if audit:
            audit.log_check(cfg.kind, check.name, check.passed, check.value, check.tolerance, check.note)
        if metrics:
            metrics.record_check(cfg.kind, check.name, check.passed, check.deviation)
    if metrics:
        metrics.record_duration(cfg.kind, elapsed)
    if audit:
        audit.log_scenario_finished(
            cfg.kind, cfg.config_hash, cfg.seed, report.all_passed, report.duration_ms
        )
    _LOGGER.info(
        "%s scenario %r finished: %d checks, %s",
        cfg.kind,
        cfg.name,
        len(report.checks),
        "all passed" if report.all_passed else f"failed: {', '.join(report.failed())}",
    )
    return report
