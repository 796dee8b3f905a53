"""Run configuration: defaults, key-value config files, flags and environment.

Precedence, lowest to highest: built-in defaults, the config file, command-line
flags, then ``OVOWATCH_*`` environment variables.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .evaluation import BaseConfig, CvConfig
from .features import FeatureConfig
from .simgen import GeneratorConfig, LabelRule
from .svm import KernelSpec, TrainConfig

ENV_PREFIX = "OVOWATCH_"
PROVENANCE_FILE = "run_config.txt"


class ConfigError(ValueError):
    """A config key or value that cannot be used; reported as a usage error."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "."
    data: str = "data"
    verbosity: int = 0
    n_jobs: int = 1
    # generator
    flocks: int = 24
    problem_rate: float = 0.0185
    clean_flock_fraction: float = 0.5
    daily_noise_sd: float = 0.006
    weekly_cycle_amplitude: float = 0.02
    collection_carry_sd: float = 0.02
    mortality_daily_hazard: float = 2.5e-4
    deficit_threshold: float = 0.04
    # features
    window: int = 14
    horizon: int = 0
    # svm
    kernel: str = "rbf"
    sigma: float = 5.0
    degree: int = 3
    c: float = 0.15
    kkt_tolerance: float = 1e-3
    max_passes: int = 100
    class_balance: bool = True
    allow_large_c: bool = False
    # cross-validation
    folds: int = 5
    reps: int = 10
    alpha: float = 0.01

    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(
            n_flocks=self.flocks,
            problem_rate=self.problem_rate,
            clean_flock_fraction=self.clean_flock_fraction,
            daily_noise_sd=self.daily_noise_sd,
            weekly_cycle_amplitude=self.weekly_cycle_amplitude,
            collection_carry_sd=self.collection_carry_sd,
            mortality_daily_hazard=self.mortality_daily_hazard,
            label_rule=LabelRule(deficit_threshold=self.deficit_threshold),
            seed=self.seed,
        )

    def feature(self) -> FeatureConfig:
        return FeatureConfig(window_size=self.window, forecast_interval=self.horizon)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(kind=self.kernel, sigma=self.sigma, degree=self.degree)

    def train(self) -> TrainConfig:
        return TrainConfig(
            c=self.c,
            kkt_tolerance=self.kkt_tolerance,
            max_passes=self.max_passes,
            seed=self.seed,
            class_balance=self.class_balance,
            allow_large_c=self.allow_large_c,
        )

    def cv(self) -> CvConfig:
        return CvConfig(k=self.folds, repetitions=self.reps, seed=self.seed)

    def base(self) -> BaseConfig:
        return BaseConfig(self.feature(), self.kernel_spec(), self.train(), self.cv())

    def validate(self) -> "RunConfig":
        """Build every derived config once so bad values surface before any work starts."""
        if self.flocks < 1:
            raise ConfigError("flocks must be >= 1")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        try:
            self.generator()
            self.base()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw: Any) -> Any:
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(_FIELDS))}")
    kind = type(getattr(RunConfig(), key))
    if not isinstance(raw, str):
        return kind(raw) if kind is not bool else bool(raw)
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key} (expected {kind.__name__})") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = _coerce(key, value)
    return values


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            out[name[len(ENV_PREFIX):].lower()] = _coerce(name[len(ENV_PREFIX):].lower(), value)
    return out


def resolve(
    file_values: Optional[Mapping[str, Any]] = None,
    flag_values: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    merged: dict[str, Any] = {}
    for layer in (file_values or {}, flag_values or {}, env_overrides(environ)):
        for key, value in layer.items():
            if value is not None:
                merged[key] = _coerce(key, value)
    return replace(RunConfig(), **merged).validate()


def format_run_config(cfg: RunConfig) -> str:
    lines = ["# resolved run configuration"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
