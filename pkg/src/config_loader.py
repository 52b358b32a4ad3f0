from __future__ import annotations

import copy
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .schema_validator import SCENARIO_SCHEMA_ID, SchemaValidator
from .utils import generate_config_hash, parse_complex_matrix, parse_complex_vector


_LOGGER = logging.getLogger(__name__)


SCENARIO_KINDS = ("two_lab", "detector_grid", "equivalence", "dynamics", "separation_check")
DEFAULT_SHOTS = 100_000
DEFAULT_TIMES = tuple(i / 19 for i in range(20))
RENORMALIZE_TOL = 1e-12


class ConfigError(ValueError):
    """Scenario file failed schema or semantic validation."""

    def __init__(self, problems: Sequence[str], source: Optional[str] = None) -> None:
        self.problems = list(problems)
        where = f"{source}: " if source else ""
        super().__init__(where + "; ".join(self.problems))


@dataclass(frozen=True)
class Tolerances:
    separation: float = 1e-10
    identity: float = 1e-12
    equivalence: float = 1e-10
    compatibility: float = 1e-8
    sigmas: float = 4.0


@dataclass(frozen=True)
class StateSpec:
    mode: Optional[int] = None
    amplitudes: Optional[Tuple[complex, ...]] = None
    support: Optional[Tuple[int, int]] = None

    def vector(self, dim: int) -> np.ndarray:
        """Normalized amplitude vector on a ``dim``-dimensional space."""
        out = np.zeros(dim, dtype=complex)
        if self.mode is not None:
            out[self.mode] = 1.0
        elif self.amplitudes is not None:
            out[:] = self.amplitudes
            norm = float(np.linalg.norm(out))
            if abs(norm - 1.0) > RENORMALIZE_TOL:
                _LOGGER.warning("State amplitudes have norm %.6g, renormalizing", norm)
                out /= norm
        else:
            assert self.support is not None
            a, b = self.support
            out[a:b] = 1.0 / np.sqrt(b - a)
        return out


@dataclass(frozen=True)
class EnvironmentSpec:
    label: str
    modes: Optional[Tuple[int, ...]] = None
    factors: Optional[Tuple[StateSpec, ...]] = None

    @property
    def n_particles(self) -> int:
        return len(self.modes) if self.modes is not None else len(self.factors or ())


@dataclass(frozen=True)
class MeterSpec:
    name: str = "meter"
    registered: Optional[Tuple[int, ...]] = None
    registered_eigen: Optional[Tuple[int, ...]] = None
    threshold: Optional[float] = None
    detectors: Optional[Tuple[Tuple[int, int], ...]] = None
    forbidden: Tuple[int, ...] = ()
    eps_prime: Optional[float] = None


@dataclass(frozen=True)
class HamiltonianSpec:
    h: np.ndarray = field(repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class SweepSpec:
    trials: int
    master_seed: int = 0
    max_dim: int = 4
    max_env: int = 2


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    dim: int
    raw: Dict[str, Any] = field(repr=False, compare=False)
    name: str = ""
    tau: int = 1
    seed: int = 0
    shots: int = DEFAULT_SHOTS
    observable: Optional[np.ndarray] = field(default=None, repr=False)
    labs: Optional[Tuple[int, int]] = None
    meter: MeterSpec = MeterSpec()
    prepared: Optional[StateSpec] = None
    prepared_mixture: Tuple[Tuple[float, StateSpec], ...] = ()
    environment: Tuple[EnvironmentSpec, ...] = ()
    hamiltonian: Optional[HamiltonianSpec] = None
    times: Tuple[float, ...] = DEFAULT_TIMES
    tolerances: Tolerances = Tolerances()
    allow_violation: bool = False
    expect_violation: bool = False
    sweep: Optional[SweepSpec] = None

    @property
    def config_hash(self) -> str:
        return generate_config_hash(self.raw)


def _parse_state(raw: Dict[str, Any]) -> StateSpec:
    if "mode" in raw:
        return StateSpec(mode=int(raw["mode"]))
    if "amplitudes" in raw:
        return StateSpec(amplitudes=tuple(parse_complex_vector(raw["amplitudes"])))
    a, b = raw["support"]
    return StateSpec(support=(int(a), int(b)))


def _check_state(spec: StateSpec, dim: int, where: str, problems: List[str]) -> None:
    if spec.mode is not None and spec.mode >= dim:
        problems.append(f"{where}.mode {spec.mode} out of range [0, {dim})")
    if spec.amplitudes is not None:
        if len(spec.amplitudes) != dim:
            problems.append(f"{where}.amplitudes has {len(spec.amplitudes)} entries, dim is {dim}")
        elif float(np.linalg.norm(spec.amplitudes)) < RENORMALIZE_TOL:
            problems.append(f"{where}.amplitudes is the zero vector")
    if spec.support is not None:
        a, b = spec.support
        if not 0 <= a < b <= dim:
            problems.append(f"{where}.support [{a}, {b}) must satisfy 0 <= a < b <= {dim}")


def _check_indices(values: Sequence[int], dim: int, where: str, problems: List[str]) -> None:
    bad = [i for i in values if i >= dim]
    if bad:
        problems.append(f"{where} has indices out of range [0, {dim}): {bad}")
    if len(set(values)) != len(values):
        problems.append(f"{where} indices must be distinct")


def _check_matrix(raw: Any, dim: int, where: str, problems: List[str]) -> Optional[np.ndarray]:
    try:
        matrix = parse_complex_matrix(raw)
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None
    if matrix.shape != (dim, dim):
        problems.append(f"{where} has shape {matrix.shape}, expected ({dim}, {dim})")
        return None
    return matrix


def _validate_config_dict(cfg: dict) -> ScenarioConfig:
    """Semantic pass run after schema validation."""
    problems: List[str] = []
    kind = cfg["kind"]
    dim = int(cfg["dim"])

    observable = None
    if "observable" in cfg and "observable_matrix" in cfg:
        problems.append("give observable or observable_matrix, not both")
    if "observable" in cfg:
        observable = np.diag(np.asarray(cfg["observable"], dtype=float)).astype(complex)
        if len(cfg["observable"]) != dim:
            problems.append(f"observable has {len(cfg['observable'])} entries, dim is {dim}")
    elif "observable_matrix" in cfg:
        observable = _check_matrix(cfg["observable_matrix"], dim, "observable_matrix", problems)

    labs = None
    if "labs" in cfg:
        labs = (int(cfg["labs"][0]), int(cfg["labs"][1]))
        _check_indices(labs, dim, "labs", problems)

    meter_raw = cfg.get("meter", {})
    detectors = None
    if "detectors" in meter_raw:
        detectors = tuple((int(a), int(b)) for a, b in meter_raw["detectors"])
        taken = np.zeros(dim, dtype=bool)
        for a, b in detectors:
            if not 0 <= a < b <= dim:
                problems.append(f"meter.detectors cell [{a}, {b}) outside grid of size {dim}")
                continue
            if taken[a:b].any():
                problems.append(f"meter.detectors cell [{a}, {b}) overlaps another cell")
            taken[a:b] = True
    selectors = [k for k in ("registered", "registered_eigen", "threshold", "detectors") if k in meter_raw]
    if len(selectors) > 1:
        problems.append(f"meter takes one of registered/registered_eigen/threshold/detectors, got {selectors}")
    for key in ("registered", "registered_eigen", "forbidden"):
        if key in meter_raw:
            _check_indices(meter_raw[key], dim, f"meter.{key}", problems)
    if ("forbidden" in meter_raw) != ("eps_prime" in meter_raw):
        problems.append("meter.forbidden and meter.eps_prime go together")
    meter = MeterSpec(
        name=meter_raw.get("name", "meter"),
        registered=tuple(meter_raw["registered"]) if "registered" in meter_raw else None,
        registered_eigen=(
            tuple(meter_raw["registered_eigen"]) if "registered_eigen" in meter_raw else None
        ),
        threshold=float(meter_raw["threshold"]) if "threshold" in meter_raw else None,
        detectors=detectors,
        forbidden=tuple(meter_raw.get("forbidden", ())),
        eps_prime=float(meter_raw["eps_prime"]) if "eps_prime" in meter_raw else None,
    )

    prepared = None
    if "prepared" in cfg:
        prepared = _parse_state(cfg["prepared"])
        _check_state(prepared, dim, "prepared", problems)
    mixture: List[Tuple[float, StateSpec]] = []
    for i, ent in enumerate(cfg.get("prepared_mixture", [])):
        spec = _parse_state(ent["state"])
        _check_state(spec, dim, f"prepared_mixture[{i}].state", problems)
        mixture.append((float(ent["weight"]), spec))
    if prepared is not None and mixture:
        problems.append("give prepared or prepared_mixture, not both")

    environment: List[EnvironmentSpec] = []
    for i, ent in enumerate(cfg.get("environment", [])):
        where = f"environment[{i}]"
        if "modes" in ent:
            modes = tuple(int(m) for m in ent["modes"])
            bad = [m for m in modes if m >= dim]
            if bad:
                problems.append(f"{where}.modes out of range [0, {dim}): {bad}")
            environment.append(EnvironmentSpec(ent["label"], modes=modes))
        else:
            factors = tuple(_parse_state(f) for f in ent["factors"])
            for j, f in enumerate(factors):
                _check_state(f, dim, f"{where}.factors[{j}]", problems)
            environment.append(EnvironmentSpec(ent["label"], factors=factors))
    labels = [e.label for e in environment]
    if len(set(labels)) != len(labels):
        problems.append("environment labels must be unique")

    hamiltonian = None
    if "hamiltonian" in cfg:
        h = _check_matrix(cfg["hamiltonian"]["h"], dim, "hamiltonian.h", problems)
        v = None
        if "v" in cfg["hamiltonian"]:
            v = _check_matrix(cfg["hamiltonian"]["v"], dim, "hamiltonian.v", problems)
        if h is not None:
            hamiltonian = HamiltonianSpec(h, v)

    sweep = None
    if "sweep" in cfg:
        s = cfg["sweep"]
        sweep = SweepSpec(
            trials=int(s["trials"]),
            master_seed=int(s.get("master_seed", cfg.get("seed", 0))),
            max_dim=int(s.get("max_dim", 4)),
            max_env=int(s.get("max_env", 2)),
        )
        if kind not in ("equivalence", "dynamics"):
            problems.append(f"sweep is only supported for equivalence and dynamics, not {kind}")

    problems.extend(_kind_requirements(kind, cfg, observable, meter, prepared, mixture, environment, sweep))
    if problems:
        raise ConfigError(problems)

    tolerances = Tolerances(**cfg.get("tolerances", {}))
    return ScenarioConfig(
        kind=kind,
        dim=dim,
        raw=copy.deepcopy(cfg),
        name=cfg.get("name", kind),
        tau=int(cfg.get("tau", 1)),
        seed=int(cfg.get("seed", 0)),
        shots=int(cfg.get("shots", DEFAULT_SHOTS)),
        observable=observable,
        labs=labs,
        meter=meter,
        prepared=prepared,
        prepared_mixture=tuple(mixture),
        environment=tuple(environment),
        hamiltonian=hamiltonian,
        times=tuple(float(t) for t in cfg.get("times", DEFAULT_TIMES)),
        tolerances=tolerances,
        allow_violation=bool(cfg.get("allow_violation", False)),
        expect_violation=bool(cfg.get("expect_violation", False)),
        sweep=sweep,
    )


def _kind_requirements(
    kind: str,
    cfg: dict,
    observable: Optional[np.ndarray],
    meter: MeterSpec,
    prepared: Optional[StateSpec],
    mixture: List[Tuple[float, StateSpec]],
    environment: List[EnvironmentSpec],
    sweep: Optional[SweepSpec],
) -> List[str]:
    problems = []
    if kind == "two_lab":
        if observable is None or "observable" not in cfg:
            problems.append("two_lab needs a diagonal observable (mode values)")
        if "labs" not in cfg:
            problems.append("two_lab needs labs [k, l]")
        elif cfg["labs"][0] == cfg["labs"][1]:
            problems.append("two_lab labs must prepare different modes")
    elif kind == "detector_grid":
        if meter.detectors is None:
            problems.append("detector_grid needs meter.detectors")
        if prepared is None:
            problems.append("detector_grid needs a prepared state")
    elif kind in ("equivalence", "dynamics"):
        if sweep is None:
            if observable is None:
                problems.append(f"{kind} needs an observable")
            if prepared is None:
                problems.append(f"{kind} needs a prepared state")
            if len(environment) != 1:
                problems.append(f"{kind} needs exactly one environment object (Ψ)")
        if kind == "dynamics" and sweep is None and "hamiltonian" not in cfg:
            problems.append("dynamics needs a hamiltonian")
    elif kind == "separation_check":
        if prepared is None and not mixture:
            problems.append("separation_check needs prepared or prepared_mixture")
    return problems


def load_config_dict(raw: Any, source: str = "<dict>") -> ScenarioConfig:
    validator = SchemaValidator()
    problems = validator.errors(SCENARIO_SCHEMA_ID, raw)
    if problems:
        raise ConfigError(problems, source)
    try:
        return _validate_config_dict(raw)
    except ConfigError as exc:
        raise ConfigError(exc.problems, source) from None


def load_config(path: str | Path) -> ScenarioConfig:
    """
    Load and validate one scenario file (JSON or YAML).
    Returns a frozen ScenarioConfig.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found: {path}")
    with path.open("r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError([f"unparseable: {exc}"], str(path)) from exc
    config = load_config_dict(raw, str(path))
    _LOGGER.info(
        "Loaded scenario %r: kind=%s dim=%d tau=%+d, %d environment objects",
        config.name,
        config.kind,
        config.dim,
        config.tau,
        len(config.environment),
    )
    return config


def apply_overrides(
    config: ScenarioConfig,
    seed: Optional[int] = None,
    shots: Optional[int] = None,
    tol: Optional[float] = None,
) -> ScenarioConfig:
    """CLI overrides; the raw echo is updated so the config hash follows them."""
    raw = copy.deepcopy(config.raw)
    changes: Dict[str, Any] = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError([f"--seed must be >= 0, got {seed}"])
        raw["seed"] = changes["seed"] = seed
        if config.sweep is not None:
            # --seed reseeds the sweep as well, even over an explicit master_seed
            raw["sweep"] = {**raw.get("sweep", {}), "master_seed": seed}
            changes["sweep"] = dataclasses.replace(config.sweep, master_seed=seed)
    if shots is not None:
        if shots < 1:
            raise ConfigError([f"--shots must be >= 1, got {shots}"])
        raw["shots"] = changes["shots"] = shots
    if tol is not None:
        if not tol > 0:
            raise ConfigError([f"--tol must be > 0, got {tol}"])
        tolerances = dataclasses.replace(
            config.tolerances, separation=tol, identity=tol, equivalence=tol, compatibility=tol
        )
        raw["tolerances"] = {**raw.get("tolerances", {}), **dataclasses.asdict(tolerances)}
        changes["tolerances"] = tolerances
    if not changes:
        return config
    return dataclasses.replace(config, raw=raw, **changes)
