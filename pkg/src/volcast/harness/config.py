"""Experiment configuration (YAML).

Schema, with defaults::

    seed: 0                  # master seed; per-task seeds derive from it
    holdout_count: 10        # evaluation stocks, excluded from joint training
    train_fraction: 0.7      # temporal cut on the global calendar
    output_dir: results
    allow_partial: false     # tolerate a failed ARIMA fit for a stock
    data:
      source: synthetic      # synthetic | prices | volatility
      path: null             # CSV for prices/volatility sources
      max_missing: 10
      n_series: 60           # synthetic only
      n_days: 2000
      seed: null             # synthetic panel seed; null derives it from `seed`
      synthetic: {phi: 0.97, sigma: 0.06, factor_phi: 0.95, factor_sigma: 0.005,
                  beta_mean: 1.0, beta_sd: 0.25, mu_mean: -1.386, mu_sd: 0.3,
                  burn_in: 250, start_date: "2009-01-02"}
    cnn:
      epochs: 300
      batch_size: 32
      target: sequence       # sequence | last
      shuffle_each_epoch: true
      filters: 8
      kernel: 2
      n_hidden: 6
      window: 64
      rho: 0.95
      epsilon: 1.0e-6
    arima:
      enabled: true
      max_p: 3
      max_q: 3
      max_d: 2
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigError
from ..marketdata import SyntheticSettings

DATA_SOURCES = ("synthetic", "prices", "volatility")


@dataclass
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    max_missing: int = 10
    n_series: int = 60
    n_days: int = 2000
    seed: int | None = None
    synthetic: SyntheticSettings = field(default_factory=SyntheticSettings)


@dataclass
class CnnConfig:
    epochs: int = 300
    batch_size: int = 32
    target: str = "sequence"
    shuffle_each_epoch: bool = True
    filters: int = 8
    kernel: int = 2
    n_hidden: int = 6
    window: int = 64
    rho: float = 0.95
    epsilon: float = 1e-6


@dataclass
class ArimaConfig:
    enabled: bool = True
    max_p: int = 3
    max_q: int = 3
    max_d: int = 2


@dataclass
class ExperimentConfig:
    seed: int = 0
    holdout_count: int = 10
    train_fraction: float = 0.7
    output_dir: str = "results"
    allow_partial: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)
    arima: ArimaConfig = field(default_factory=ArimaConfig)

    def validate(self) -> "ExperimentConfig":
        if self.data.source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}")
        if self.data.source != "synthetic" and not self.data.path:
            raise ConfigError(f"data.path is required for source '{self.data.source}'")
        if self.holdout_count < 1:
            raise ConfigError("holdout_count must be at least 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        c = self.cnn
        if c.epochs < 1 or c.batch_size < 1 or c.filters < 1 or c.kernel < 1 or c.n_hidden < 1 or c.window < 2:
            raise ConfigError("cnn sizes must be positive")
        if c.target not in ("sequence", "last"):
            raise ConfigError("cnn.target must be 'sequence' or 'last'")
        a = self.arima
        if not (0 <= a.max_p <= 3 and 0 <= a.max_q <= 3 and 0 <= a.max_d <= 2):
            raise ConfigError("arima grid must stay within p, q <= 3 and d <= 2")
        return self

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExperimentConfig":
        raw = dict(raw or {})
        try:
            data = dict(raw.pop("data", None) or {})
            synthetic = SyntheticSettings(**(data.pop("synthetic", None) or {}))
            cfg = cls(data=DataConfig(synthetic=synthetic, **data),
                      cnn=CnnConfig(**(raw.pop("cnn", None) or {})),
                      arima=ArimaConfig(**(raw.pop("arima", None) or {})),
                      **raw)
        except TypeError as exc:
            raise ConfigError(f"unknown or invalid config key: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def derive_seed(master: int, *labels) -> int:
    """Stable per-task seed from the master seed and task labels."""
    key = tuple(zlib.crc32(str(label).encode("utf-8")) for label in labels)
    return int(np.random.SeedSequence(int(master), spawn_key=key).generate_state(1)[0])
