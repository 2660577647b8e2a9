"""Rolling baselines, standardized deviations and the composite strength."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import AlignmentError, ConfigError


@dataclass(frozen=True)
class BaselineStats:
    """Trailing baseline of one channel; ``mu``/``sigma_hat`` are NaN where undefined."""

    mu: np.ndarray
    sigma_hat: np.ndarray
    defined: np.ndarray

    def __len__(self) -> int:
        return len(self.mu)


def rolling_baseline(x, B: int, eps: float = 1e-12) -> BaselineStats:
    """Mean and sample std (``B-1`` denominator, ``eps`` inside the root) of
    the B values strictly before each slot.

    A slot is undefined until B prior values exist, and whenever its
    trailing window contains a NaN.
    """
    if B < 2:
        raise ConfigError(f"baseline window must be >= 2, got {B}")
    x = np.asarray(x, dtype=float)
    n = x.size
    mu = np.full(n, np.nan)
    sd = np.full(n, np.nan)
    defined = np.zeros(n, dtype=bool)
    if n <= B:
        return BaselineStats(mu, sd, defined)
    win = sliding_window_view(x, B)[: n - B]  # win[j] = x[j:j+B] -> baseline of slot j+B
    ok = ~np.isnan(win).any(axis=1)
    # anchor on the first value so flat windows give an exact mean
    anchor = win[:, :1]
    dev = win - anchor
    m = anchor[:, 0] + dev.mean(axis=1)
    var = ((dev - dev.mean(axis=1)[:, None]) ** 2).sum(axis=1) / (B - 1)
    s = np.sqrt(var + eps)
    mu[B:] = np.where(ok, m, np.nan)
    sd[B:] = np.where(ok, s, np.nan)
    defined[B:] = ok
    return BaselineStats(mu, sd, defined)


def zscore(x, stats: BaselineStats, eps: float = 1e-12) -> np.ndarray:
    """``(x - mu) / (sigma_hat + eps)``; NaN where the input or baseline is missing."""
    x = np.asarray(x, dtype=float)
    if x.size != len(stats):
        raise AlignmentError(f"channel has {x.size} slots but baseline has {len(stats)}")
    z = (x - stats.mu) / (stats.sigma_hat + eps)
    z[~stats.defined] = np.nan
    return z


def channel_zscore(x, B: int, eps: float = 1e-12) -> np.ndarray:
    return zscore(x, rolling_baseline(x, B, eps), eps)


def composite_strength(
    z_r,
    z_sigma,
    z_A,
    alpha_r: float = 1.0,
    alpha_sigma: float = 1.0,
    alpha_A: float = 1.0,
    *,
    clamp_attention_z: bool = False,
) -> np.ndarray:
    """``alpha_r*|z_r| + alpha_sigma*z_sigma + alpha_A*z_A``.

    Volatility and attention enter signed. A term with zero weight is
    ignored (its NaNs do not propagate); any NaN in a weighted term does.
    """
    alphas = (alpha_r, alpha_sigma, alpha_A)
    if any(a < 0 or not np.isfinite(a) for a in alphas):
        raise ConfigError(f"strength weights must be finite and >= 0, got {alphas}")
    if not any(a > 0 for a in alphas):
        raise ConfigError("at least one strength weight must be positive")
    z_r, z_sigma, z_A = (np.asarray(z, dtype=float) for z in (z_r, z_sigma, z_A))
    if not (z_r.shape == z_sigma.shape == z_A.shape):
        raise AlignmentError("z-score channels differ in length")
    if clamp_attention_z:
        z_A = np.where(np.isnan(z_A), np.nan, np.maximum(z_A, 0.0))
    s = np.zeros(z_r.shape)
    for a, term in ((alpha_r, np.abs(z_r)), (alpha_sigma, z_sigma), (alpha_A, z_A)):
        if a > 0:
            s = s + a * term
    return s


def warmup_mask(n: int, B: int, L: int) -> np.ndarray:
    """Rows whose baselines still lean on the first, unreliable stretch."""
    return np.arange(n) < B + L


def deviation_frame(panel: pd.DataFrame, cfg, sources: Sequence[str] | None = None) -> pd.DataFrame:
    """Z-scores, strength and warm-up flag for one ticker's panel frame.

    Columns: ``ticker, date, z_r, z_sigma, z_A, s, warmup`` followed by one
    ``z_<source>`` column per attention source.
    """
    sources = list(cfg.attention_sources if sources is None else sources)
    B, eps = cfg.baseline_window, cfg.eps
    z_r = channel_zscore(panel["r"].to_numpy(float), B, eps)
    z_sigma = channel_zscore(panel["sigma"].to_numpy(float), B, eps)
    z_A = channel_zscore(panel["A"].to_numpy(float), B, eps)
    out = pd.DataFrame({"ticker": panel["ticker"].to_numpy(), "date": panel["date"].to_numpy()})
    out["z_r"] = z_r
    out["z_sigma"] = z_sigma
    out["z_A"] = z_A
    out["s"] = composite_strength(
        z_r,
        z_sigma,
        z_A,
        cfg.alpha_r,
        cfg.alpha_sigma,
        cfg.alpha_A,
        clamp_attention_z=cfg.clamp_attention_z,
    )
    out["warmup"] = warmup_mask(len(panel), B, cfg.vol_lookback)
    for s in sources:
        col = panel[s].to_numpy(float) if s in panel else np.full(len(panel), np.nan)
        out[f"z_{s}"] = channel_zscore(col, B, eps)
    return out


def compute_deviations(panel: dict[str, pd.DataFrame], cfg) -> dict[str, pd.DataFrame]:
    return {t: deviation_frame(panel[t], cfg) for t in sorted(panel)}
