"""Run configuration: a line-oriented ``key = value`` file plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .channel import ScenarioConfig
from .nn import TrainConfig
from .sdr import SolverOptions


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    # scenario
    M: int = 1
    N: int = 8
    d_AR: float = 8.0
    d0_min: float = 0.0
    d0_max: float = 8.0
    d1_min: float = 1.0
    d1_max: float = 6.0
    d_ref: float = 1.0
    snr_db: float = 10.0
    # data
    count: int = 10000
    seed: Optional[int] = None
    threads: Optional[int] = None
    # training
    batch_size: int = 5000
    init_lr: float = 0.001
    max_epochs: int = 1000
    early_stop_patience: int = 30
    plateau_patience: int = 15
    lr_decay: float = 0.33
    bn: bool = True
    # SDR
    sdr_trials: int = 100
    sdr_tol: float = 1e-4
    sdr_restarts: int = 20
    sdr_max_iters: int = 5000
    # evaluation
    reference: str = "sdr"
    source: str = field(default="", compare=False)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "source"]

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get("RISBF_SEED")
        if env:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"RISBF_SEED is not an integer: {env!r}") from None
        return 0

    def scenario(self) -> ScenarioConfig:
        return ScenarioConfig(M=self.M, N=self.N, d_AR=self.d_AR,
                              d0_range=(self.d0_min, self.d0_max),
                              d1_range=(self.d1_min, self.d1_max),
                              d_ref=self.d_ref, snr_db=self.snr_db)

    def training(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, init_lr=self.init_lr,
                           max_epochs=self.max_epochs,
                           early_stop_patience=self.early_stop_patience,
                           plateau_patience=self.plateau_patience, lr_decay=self.lr_decay,
                           seed=self.resolved_seed(), threads=self.threads)

    def solver(self) -> SolverOptions:
        return SolverOptions(trials=self.sdr_trials, tol=self.sdr_tol,
                             restarts=self.sdr_restarts, max_iters=self.sdr_max_iters)

    def validate(self) -> "RunConfig":
        """Build every derived config once so invalid values fail before any work."""
        try:
            self.scenario()
            self.training()
            self.solver()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.count < 1:
            raise ConfigError("count must be at least 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")
        return self

    def describe(self) -> str:
        parts = [f"{k}={getattr(self, k)}" for k in self.keys()]
        parts[parts.index(f"seed={self.seed}")] = f"seed={self.resolved_seed()}"
        return " ".join(parts)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str) -> Any:
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if "bool" in kind:
            return _parse_bool(raw)
        if "int" in kind:
            if raw.lower() in ("none", ""):
                if "Optional" in kind:
                    return None
            return int(raw)
        if "float" in kind:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<text>") -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES or key == "source":
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        values[key] = _convert(key, raw)
    return values


def load_run_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    values: dict[str, Any] = {}
    source = ""
    if path:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values.update(parse_config_text(text, str(p)))
        source = str(p)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown config key '{key}'")
        values[key] = value
    return RunConfig(**values, source=source).validate()
