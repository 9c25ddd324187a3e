"""Pipeline configuration: JSON file + command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from datetime import date
from pathlib import Path

from .gbrt import GbrtParams


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    results: str = ""
    letters: str = ""
    words: str = ""
    out: str = "out"


@dataclass
class CleaningConfig:
    neighbor_window: int = 3
    sum_drop_tolerance: float = 10.0
    outlier_ratio: float = 0.2


@dataclass
class ArimaConfig:
    d: int | None = None                 # None: smallest d whose ADF p-value < 0.05
    max_order: int = 3
    criterion: str = "bic"
    target_date: str = "2023-03-01"
    hindcast_months: int = 2
    diag_lags: int = 20
    white_noise_lags: int = 10
    sweep: list[float] = field(default_factory=lambda: [0.3, 0.35, 0.4, 0.45])


@dataclass
class GbrtConfig:
    params: GbrtParams = field(default_factory=GbrtParams)
    test_fraction: float = 0.30
    tolerance: float = 3.0


@dataclass
class ClusteringConfig:
    k: int = 3
    k_max: int = 10
    restarts: int = 10
    max_iter: int = 300


@dataclass
class ClassifierConfig:
    test_fraction: float = 0.30
    max_depth: int | None = None
    min_samples_leaf: int = 1


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    arima: ArimaConfig = field(default_factory=ArimaConfig)
    gbrt: GbrtConfig = field(default_factory=GbrtConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    hard_share_threshold: float = 90.0
    seed: int = 0

    def validate(self, needs: tuple[str, ...] = ()) -> None:
        for name in needs:
            if not getattr(self.paths, name):
                raise ConfigError(f"paths.{name} is required for this command")
        for label, frac in (("gbrt.test_fraction", self.gbrt.test_fraction),
                            ("classifier.test_fraction", self.classifier.test_fraction)):
            if not 0 < frac < 1:
                raise ConfigError(f"{label} must be in (0, 1)")
        if self.cleaning.neighbor_window < 1:
            raise ConfigError("cleaning.neighbor_window must be >= 1")
        if self.arima.criterion not in ("aic", "bic"):
            raise ConfigError("arima.criterion must be 'aic' or 'bic'")
        if self.arima.d is not None and not 0 <= self.arima.d <= 2:
            raise ConfigError("arima.d must be 0, 1 or 2")
        if self.arima.hindcast_months < 1:
            raise ConfigError("arima.hindcast_months must be >= 1")
        try:
            date.fromisoformat(self.arima.target_date)
        except ValueError:
            raise ConfigError(f"bad arima.target_date {self.arima.target_date!r}") from None
        if self.clustering.k < 1 or self.clustering.k_max < 1:
            raise ConfigError("clustering.k and clustering.k_max must be >= 1")
        if self.gbrt.tolerance < 0:
            raise ConfigError("gbrt.tolerance must be >= 0")

    def snapshot(self) -> dict:
        d = asdict(self)
        d["paths"]["out"] = "."  # output location does not affect results
        return d


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name) if name != "params" else GbrtParams()
        sub = f"{where}.{name}" if where else name
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "")


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
