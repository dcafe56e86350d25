"""Run configuration for sweeps and calibration.

A run is described by a JSON file::

    {
      "domain": {"half_width": 0.5, "n": 24},
      "fixtures": [
        {"id": "born", "seed": 1, "margin": 2,
         "base": {"kind": "cosine_bump", "params": {"amplitude": 0.5}},
         "perturbation": {"kind": "gaussian_bump", "params": {"amplitude": 0.2}}}
      ],
      "sweep": {"energies": [0, 1, 4, 16], "taus": [0.3, 0.6, 0.9, 1.0],
                "ms_l2": [2, 4], "ms_linf": [3.5, 5], "scales": [1.0]},
      "tolerances": {"mu_tolerance": 1e-8},
      "seed": 0,
      "output_dir": "results"
    }

Unknown keys are rejected at every level. Environment variables override the
file (and are in turn overridden by CLI flags)::

    GELFAND_WORKERS=4        # sweep worker threads
    GELFAND_LOG_LEVEL=DEBUG  # CLI log level
    GELFAND_OUTPUT_DIR=out   # output directory when the config has none
    GELFAND_RECORD_TIMING=1  # add the timing column to sweep.csv
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar, Union

from errors import ConfigurationError
from potential import DEFAULT_MARGIN, DEFAULT_PERIOD_FACTOR, GENERATOR_KINDS

DEFAULT_WORKERS = 1
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_OUTPUT_DIR = "results"

DEFAULT_ENERGIES = (0.0, 1.0, 4.0, 16.0)
DEFAULT_TAUS = (0.3, 0.6, 0.9, 1.0)
DEFAULT_MS_L2 = (2.0, 4.0)
DEFAULT_MS_LINF = (3.5, 5.0)
# Sweep axes that may be given as an empty list.
OPTIONAL_AXES = ("ms_l2", "ms_linf")


def _env(name: str, default: Optional[str] = None,
         env: Optional[Mapping[str, str]] = None) -> Optional[str]:
    source = os.environ if env is None else env
    value = source.get(name)
    if value is None or value == "":
        return default
    return value


def _env_bool(name: str, default: bool, env: Optional[Mapping[str, str]] = None) -> bool:
    raw = _env(name, env=env)
    if raw is None:
        return default
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: int, env: Optional[Mapping[str, str]] = None) -> int:
    raw = _env(name, env=env)
    if raw is None:
        return default
    try:
        return int(raw)
    except (TypeError, ValueError):
        return default


def env_workers(env: Optional[Mapping[str, str]] = None) -> Optional[int]:
    """GELFAND_WORKERS as a positive int, or None when unset or invalid."""
    value = _env_int("GELFAND_WORKERS", 0, env)
    return value if value > 0 else None


def env_log_level(env: Optional[Mapping[str, str]] = None) -> str:
    return (_env("GELFAND_LOG_LEVEL", DEFAULT_LOG_LEVEL, env) or DEFAULT_LOG_LEVEL).upper()


def env_output_dir(env: Optional[Mapping[str, str]] = None) -> Optional[str]:
    return _env("GELFAND_OUTPUT_DIR", None, env)


# ---------------------------------------------------------------------
# Config sections
# ---------------------------------------------------------------------
T = TypeVar("T")


def _check_keys(data: Any, allowed, path: str):
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"{path or 'config'}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError(f"unknown config key: {where}{unknown[0]}")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _numbers(value: Any, path: str, allow_empty: bool = False) -> Tuple[float, ...]:
    if not isinstance(value, list) or not (value or allow_empty):
        raise ConfigurationError(f"{path}: expected a non-empty list of numbers")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


@dataclass(frozen=True)
class DomainConfig:
    half_width: float = 0.5
    n: int = 24


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class FixtureConfig:
    """v1 = base, v2 = base + scale * perturbation (scale from the sweep)."""

    id: str
    base: GeneratorSpec
    perturbation: GeneratorSpec
    seed: int = 0
    margin: int = DEFAULT_MARGIN


@dataclass(frozen=True)
class SweepConfig:
    energies: Tuple[float, ...] = DEFAULT_ENERGIES
    taus: Tuple[float, ...] = DEFAULT_TAUS
    ms_l2: Tuple[float, ...] = DEFAULT_MS_L2
    ms_linf: Tuple[float, ...] = DEFAULT_MS_LINF
    scales: Tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class Tolerances:
    mu_tolerance: float = 1e-8
    mu_max_iterations: int = 200
    residual_rtol: float = 1e-10
    rejitter_attempts: int = 5
    rho_l_ceiling: float = 25.0
    padding: float = 4.0
    oversample: int = 2
    period_factor: float = DEFAULT_PERIOD_FACTOR


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig = DomainConfig()
    fixtures: Tuple[FixtureConfig, ...] = ()
    sweep: SweepConfig = SweepConfig()
    tolerances: Tolerances = Tolerances()
    constants_path: Optional[str] = None
    output_dir: Optional[str] = None
    seed: int = 0
    workers: int = DEFAULT_WORKERS
    record_timing: bool = False
    reconstruct: bool = True

    def fixture(self, fixture_id: str) -> FixtureConfig:
        for fx in self.fixtures:
            if fx.id == fixture_id:
                return fx
        raise ConfigurationError(f"no fixture named {fixture_id!r}")


def _parse_generator(data: Any, path: str) -> GeneratorSpec:
    _check_keys(data, ("kind", "params"), path)
    kind = data.get("kind")
    if kind not in GENERATOR_KINDS:
        raise ConfigurationError(f"{path}.kind: expected one of {GENERATOR_KINDS}, got {kind!r}")
    params = data.get("params", {})
    if not isinstance(params, Mapping):
        raise ConfigurationError(f"{path}.params: expected an object")
    return GeneratorSpec(kind=kind, params=dict(params))


def _parse_fixture(data: Any, path: str) -> FixtureConfig:
    _check_keys(data, ("id", "base", "perturbation", "seed", "margin"), path)
    fixture_id = data.get("id")
    if not isinstance(fixture_id, str) or not fixture_id:
        raise ConfigurationError(f"{path}.id: expected a non-empty string")
    if "base" not in data or "perturbation" not in data:
        raise ConfigurationError(f"{path}: fixtures need 'base' and 'perturbation'")
    seed = data.get("seed", 0)
    margin = data.get("margin", DEFAULT_MARGIN)
    if not isinstance(seed, int) or not isinstance(margin, int) or margin < 0:
        raise ConfigurationError(f"{path}: seed and margin must be non-negative integers")
    return FixtureConfig(
        id=fixture_id,
        base=_parse_generator(data["base"], f"{path}.base"),
        perturbation=_parse_generator(data["perturbation"], f"{path}.perturbation"),
        seed=seed,
        margin=margin,
    )


def _parse_flat(cls: Type[T], data: Any, path: str) -> T:
    names = [f.name for f in fields(cls)]
    _check_keys(data, names, path)
    defaults = cls()
    values = {}
    for name in names:
        if name not in data:
            continue
        current = getattr(defaults, name)
        raw = data[name]
        if isinstance(current, tuple):
            values[name] = _numbers(raw, f"{path}.{name}", allow_empty=name in OPTIONAL_AXES)
        elif isinstance(current, int) and not isinstance(current, bool):
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigurationError(f"{path}.{name}: expected an integer")
            values[name] = raw
        else:
            values[name] = _number(raw, f"{path}.{name}")
    return cls(**values)


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.domain.n < 8 or cfg.domain.half_width <= 0:
        raise ConfigurationError("domain: need n >= 8 and half_width > 0")
    if any(not 0 < t <= 1 for t in cfg.sweep.taus):
        raise ConfigurationError("sweep.taus: values must lie in (0, 1]")
    if any(m <= 0 for m in cfg.sweep.ms_l2):
        raise ConfigurationError("sweep.ms_l2: values must be positive")
    if any(m <= 3 for m in cfg.sweep.ms_linf):
        raise ConfigurationError("sweep.ms_linf: the L-infinity estimate needs m > 3")
    if not cfg.sweep.ms_l2 and not cfg.sweep.ms_linf:
        raise ConfigurationError("sweep: ms_l2 and ms_linf are both empty")
    if any(s < 0 for s in cfg.sweep.scales):
        raise ConfigurationError("sweep.scales: values must be non-negative")
    if cfg.workers < 1:
        raise ConfigurationError("workers must be >= 1")
    ids = [fx.id for fx in cfg.fixtures]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("fixture ids must be unique")
    if cfg.tolerances.rejitter_attempts < 1 or cfg.tolerances.oversample < 1:
        raise ConfigurationError("tolerances: rejitter_attempts and oversample must be >= 1")
    return cfg


def parse_config(data: Mapping[str, Any]) -> RunConfig:
    """Build a validated RunConfig from decoded JSON."""
    top = [f.name for f in fields(RunConfig)]
    _check_keys(data, top, "")
    fixtures = data.get("fixtures", [])
    if not isinstance(fixtures, list):
        raise ConfigurationError("fixtures: expected a list")
    domain = _parse_flat(DomainConfig, data.get("domain", {}), "domain")
    kwargs: Dict[str, Any] = {
        "domain": DomainConfig(half_width=domain.half_width, n=int(domain.n)),
        "fixtures": tuple(_parse_fixture(fx, f"fixtures[{i}]") for i, fx in enumerate(fixtures)),
        "sweep": _parse_flat(SweepConfig, data.get("sweep", {}), "sweep"),
        "tolerances": _parse_flat(Tolerances, data.get("tolerances", {}), "tolerances"),
    }
    for name in ("constants_path", "output_dir"):
        value = data.get(name)
        if value is not None and not isinstance(value, str):
            raise ConfigurationError(f"{name}: expected a string")
        kwargs[name] = value
    for name in ("seed", "workers"):
        if name in data:
            if isinstance(data[name], bool) or not isinstance(data[name], int):
                raise ConfigurationError(f"{name}: expected an integer")
            kwargs[name] = data[name]
    for name in ("record_timing", "reconstruct"):
        if name in data:
            if not isinstance(data[name], bool):
                raise ConfigurationError(f"{name}: expected true or false")
            kwargs[name] = data[name]
    return _validate(RunConfig(**kwargs))


def load_config(path: Union[str, Path], *, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Read a JSON config file and apply environment overrides."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return apply_env(parse_config(data), env=env)


def apply_env(cfg: RunConfig, *, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Environment beats config file for workers and timing; the output dir only fills a gap."""
    updates: Dict[str, Any] = {}
    record_timing = _env_bool("GELFAND_RECORD_TIMING", cfg.record_timing, env)
    if record_timing != cfg.record_timing:
        updates["record_timing"] = record_timing
    workers = env_workers(env)
    if workers is not None:
        updates["workers"] = workers
    out = env_output_dir(env)
    if out is not None and cfg.output_dir is None:
        updates["output_dir"] = out
    return replace(cfg, **updates) if updates else cfg


def resolve_output_dir(cfg: RunConfig, override: Optional[str] = None) -> Path:
    return Path(override or cfg.output_dir or DEFAULT_OUTPUT_DIR)


def default_config() -> RunConfig:
    """Built-in sweep: three fixtures from Born to moderate amplitude."""
    fixtures = (
        FixtureConfig(
            id="born",
            base=GeneratorSpec("cosine_bump", {"amplitude": 0.2}),
            perturbation=GeneratorSpec("gaussian_bump", {"amplitude": 0.1, "width": 0.08}),
            seed=1,
        ),
        FixtureConfig(
            id="offset",
            base=GeneratorSpec("gaussian_bump", {"amplitude": 1.0, "width": 0.1}),
            perturbation=GeneratorSpec("cosine_bump", {"amplitude": 0.3, "radius": 0.2,
                                                       "center": [0.1, 0.0, -0.05]}),
            seed=2,
        ),
        FixtureConfig(
            id="random",
            base=GeneratorSpec("random_bandlimited", {"amplitude": 2.0, "modes": 2}),
            perturbation=GeneratorSpec("random_bandlimited", {"amplitude": 0.5, "modes": 2}),
            seed=3,
        ),
    )
    return RunConfig(fixtures=fixtures)
