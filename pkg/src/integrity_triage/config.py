"""Run configuration: defaults, validation and JSON round-trip."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .panel import DEFAULT_SOURCES, NORMALIZATION_MODES, RESAMPLE_MODES
from .scoring import SCALE_MODES

DEFAULT_RESAMPLE = {
    "reddit": "sum_aggregate",
    "stocktwits": "sum_aggregate",
    "wikipedia": "sum_aggregate",
    "news": "sum_aggregate",
    "trends": "forward_fill",
}


def _uniform_weights() -> dict[str, float]:
    return {s: 1.0 / len(DEFAULT_SOURCES) for s in DEFAULT_SOURCES}


@dataclass
class FetchSettings:
    """HTTP market-data endpoint. The credential is read from ``api_key_env``."""

    url_template: str = "https://api.polygon.io/v2/aggs/ticker/{ticker}/range/1/day/{from}/{to}?adjusted=true&sort=asc&limit=50000"
    api_key_env: str = "MARKET_DATA_API_KEY"
    api_key_param: str = "apiKey"
    cache_dir: str = "cache/ohlcv"
    max_retries: int = 4
    backoff_seconds: float = 1.0
    max_backoff_seconds: float = 60.0
    requests_per_minute: float = 5.0
    timeout_seconds: float = 30.0


@dataclass
class RunConfig:
    # universe and data
    tickers: list[str] | None = None
    start_date: str | None = None
    end_date: str | None = None
    ohlcv_path: str | None = None
    attention_dir: str | None = None
    output_dir: str = "runs"
    # panel
    vol_lookback: int = 20
    vol_include_current: bool = False
    ewma_lambda: float = 0.94
    eps: float = 1e-12
    attention_sources: list[str] = field(default_factory=lambda: list(DEFAULT_SOURCES))
    source_weights: dict[str, float] = field(default_factory=_uniform_weights)
    resample_modes: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_RESAMPLE))
    normalization: str = "minmax"
    # baselines and strength
    baseline_window: int = 20
    alpha_r: float = 1.0
    alpha_sigma: float = 1.0
    alpha_A: float = 1.0
    clamp_attention_z: bool = False
    # segmentation
    thr_high: float = 3.0
    thr_low: float = 2.0
    min_window_len: int = 2
    gap_tolerance: int = 3
    merge_gap: int | None = None
    # scoring
    omega_1: float = 1.0
    omega_2: float = 1.0
    omega_3: float = 1.0
    omega_4: float = 1.0
    omega_5: float = 1.0
    omega_6: float = 1.0
    scale: str = "none"
    clamp_phi4: bool = False
    delta_recur: int = 10
    tau_recur: float = math.inf
    # reporting
    exclude_warmup: bool = True
    artifact_z_cap: float | None = 20.0
    fetch: FetchSettings = field(default_factory=FetchSettings)

    @property
    def omega(self) -> list[float]:
        return [self.omega_1, self.omega_2, self.omega_3, self.omega_4, self.omega_5, self.omega_6]

    def validate(self) -> "RunConfig":
        errs = []
        if self.thr_high < self.thr_low:
            errs.append(f"thr_high ({self.thr_high}) must be >= thr_low ({self.thr_low})")
        if self.baseline_window < 2:
            errs.append(f"baseline_window must be >= 2, got {self.baseline_window}")
        if self.vol_lookback < 1:
            errs.append(f"vol_lookback must be >= 1, got {self.vol_lookback}")
        if self.min_window_len < 1:
            errs.append(f"min_window_len must be >= 1, got {self.min_window_len}")
        if self.gap_tolerance < 0:
            errs.append(f"gap_tolerance must be >= 0, got {self.gap_tolerance}")
        if self.merge_gap is not None and self.merge_gap < 0:
            errs.append(f"merge_gap must be >= 0, got {self.merge_gap}")
        if not self.eps > 0:
            errs.append(f"eps must be > 0, got {self.eps}")
        if not 0 < self.ewma_lambda < 1:
            errs.append(f"ewma_lambda must lie in (0, 1), got {self.ewma_lambda}")
        for name in ("alpha_r", "alpha_sigma", "alpha_A"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                errs.append(f"{name} must be finite and >= 0, got {v}")
        if not any(getattr(self, n) > 0 for n in ("alpha_r", "alpha_sigma", "alpha_A")):
            errs.append("at least one of alpha_r, alpha_sigma, alpha_A must be positive")
        for i, v in enumerate(self.omega, start=1):
            if not (math.isfinite(v) and v >= 0):
                errs.append(f"omega_{i} must be finite and >= 0, got {v}")
        if self.scale not in SCALE_MODES:
            errs.append(f"scale must be one of {SCALE_MODES}, got {self.scale!r}")
        if self.normalization not in NORMALIZATION_MODES:
            errs.append(f"normalization must be one of {NORMALIZATION_MODES}, got {self.normalization!r}")
        if not self.attention_sources:
            errs.append("attention_sources must not be empty")
        for s in self.attention_sources:
            w = self.source_weights.get(s)
            if w is None:
                errs.append(f"source_weights is missing source {s!r}")
            elif not (math.isfinite(w) and w >= 0):
                errs.append(f"source_weights[{s!r}] must be finite and >= 0, got {w}")
            mode = self.resample_modes.get(s, "sum_aggregate")
            if mode not in RESAMPLE_MODES:
                errs.append(f"resample_modes[{s!r}] must be one of {RESAMPLE_MODES}, got {mode!r}")
        for s in self.source_weights:
            if s not in self.attention_sources:
                errs.append(f"source_weights names unknown source {s!r}")
        if sum(self.source_weights.get(s, 0.0) for s in self.attention_sources) <= 0:
            errs.append("source_weights must have a positive total")
        if self.delta_recur < 0:
            errs.append(f"delta_recur must be >= 0, got {self.delta_recur}")
        if math.isnan(self.tau_recur):
            errs.append("tau_recur must not be NaN")
        if self.artifact_z_cap is not None and not self.artifact_z_cap > 0:
            errs.append(f"artifact_z_cap must be > 0 or null, got {self.artifact_z_cap}")
        if errs:
            raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(errs))
        return self

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        if math.isinf(d["tau_recur"]):
            d["tau_recur"] = "inf" if d["tau_recur"] > 0 else "-inf"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        """Hash of the settings that affect results (paths and fetch settings excluded)."""
        d = self.to_dict()
        for k in ("ohlcv_path", "attention_dir", "output_dir", "fetch"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}
_FETCH_FIELDS = {f.name: f for f in dataclasses.fields(FetchSettings)}


def _coerce_float(name: str, v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity", "-inf"):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    return float(v)


def _coerce_int(name: str, v) -> int:
    if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    return int(v)


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Build a validated config; unknown keys and wrong types are rejected."""
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        kind = _TYPES[key].type
        if key == "fetch":
            if not isinstance(value, dict):
                raise ConfigError("fetch: expected an object")
            bad = sorted(set(value) - set(_FETCH_FIELDS))
            if bad:
                raise ConfigError(f"unknown fetch keys: {', '.join(bad)}")
            kwargs[key] = FetchSettings(**value)
        elif value is None:
            if "None" not in kind:
                raise ConfigError(f"{key}: null is not allowed")
            kwargs[key] = None
        elif kind.startswith("float"):
            kwargs[key] = _coerce_float(key, value)
        elif kind.startswith("int"):
            kwargs[key] = _coerce_int(key, value)
        elif kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{key}: expected true/false, got {value!r}")
            kwargs[key] = value
        elif kind.startswith("dict[str, float]"):
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object")
            kwargs[key] = {str(k): _coerce_float(f"{key}.{k}", v) for k, v in value.items()}
        elif kind.startswith("dict[str, str]"):
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object")
            kwargs[key] = {str(k): str(v) for k, v in value.items()}
        elif kind.startswith("list[str]"):
            if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
                raise ConfigError(f"{key}: expected a list of strings")
            kwargs[key] = list(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{key}: expected a string, got {value!r}")
            kwargs[key] = value
    if "attention_sources" in kwargs and "source_weights" not in kwargs:
        srcs = kwargs["attention_sources"]
        kwargs["source_weights"] = {s: 1.0 / len(srcs) for s in srcs} if srcs else {}
    return RunConfig(**kwargs).validate()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_json() + "\n", encoding="utf-8")


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Copy of ``cfg`` with the non-None overrides applied, re-validated."""
    d = cfg.to_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(d)
