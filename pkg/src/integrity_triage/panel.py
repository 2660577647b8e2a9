"""Panel construction: OHLCV alignment, attention resampling and fusion,
return and volatility channels.

The bar grid of each ticker is the canonical timeline. Attention sources are
resampled onto it (never the reverse), normalized per source, and fused into
a single attention channel ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import AlignmentError, ConfigError, InputError

DEFAULT_SOURCES = ("reddit", "stocktwits", "wikipedia", "news", "trends")

RESAMPLE_MODES = ("forward_fill", "sum_aggregate")
NORMALIZATION_MODES = ("minmax", "zscore", "none")

OHLCV_COLUMNS = ["date", "open", "high", "low", "close", "volume"]


def to_day(value) -> np.datetime64:
    """Floor any timestamp-like value to a ``datetime64[D]`` calendar day."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]")
    ts = pd.Timestamp(value)
    if ts.tzinfo is not None:
        ts = ts.tz_localize(None)
    return np.datetime64(ts.date(), "D")


def _stamp(value) -> pd.Timestamp:
    ts = pd.Timestamp(value)
    return ts.tz_localize(None) if ts.tzinfo is not None else ts


def as_grid(dates: Iterable) -> np.ndarray:
    return np.array([to_day(d) for d in dates], dtype="datetime64[D]")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bar:
    ticker: str
    t: np.datetime64
    open: float
    high: float
    low: float
    close: float
    volume: float

    def problems(self) -> list[str]:
        """Return the OHLC consistency checks this bar fails (empty if valid)."""
        out = []
        vals = (self.open, self.high, self.low, self.close, self.volume)
        if not all(math.isfinite(v) for v in vals):
            return ["non-finite field"]
        if min(self.open, self.high, self.low, self.close) <= 0:
            out.append("non-positive price")
        if self.high < max(self.open, self.close):
            out.append("high < max(open, close)")
        if self.low > min(self.open, self.close):
            out.append("low > min(open, close)")
        if self.high < self.low:
            out.append("high < low")
        if self.volume < 0:
            out.append("negative volume")
        return out


@dataclass(frozen=True)
class AttentionObservation:
    source: str
    t: object
    value: float = math.nan
    coverage: str = "observed"  # "observed" | "missing"

    def __post_init__(self):
        if self.coverage not in ("observed", "missing"):
            raise InputError(f"coverage must be 'observed' or 'missing', got {self.coverage!r}")
        if self.coverage == "observed" and not (math.isfinite(self.value) and self.value >= 0):
            raise InputError(f"observed {self.source} value must be finite and >= 0, got {self.value!r}")


@dataclass(frozen=True)
class AttentionSeries:
    """One source's values on a ticker's bar grid; NaN marks no coverage."""

    source: str
    ticker: str
    dates: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise AlignmentError(
                f"{self.ticker}/{self.source}: {len(self.values)} values for {len(self.dates)} grid slots"
            )

    def __len__(self) -> int:
        return len(self.values)


def bars_frame(bars: Sequence[Bar]) -> pd.DataFrame:
    """Stack ``Bar`` records of one ticker into the canonical OHLCV frame."""
    frame = pd.DataFrame(
        {
            "date": np.array([b.t for b in bars], dtype="datetime64[D]"),
            "open": [b.open for b in bars],
            "high": [b.high for b in bars],
            "low": [b.low for b in bars],
            "close": [b.close for b in bars],
            "volume": [b.volume for b in bars],
        },
        columns=OHLCV_COLUMNS,
    )
    return frame


def validate_bars(frame: pd.DataFrame, ticker: str = "") -> None:
    """Check OHLC consistency and strictly increasing dates for one ticker."""
    o, h, l, c, v = (frame[k].to_numpy(float) for k in ("open", "high", "low", "close", "volume"))
    checks = [
        (np.isfinite(o) & np.isfinite(h) & np.isfinite(l) & np.isfinite(c) & np.isfinite(v), "non-finite field"),
        (np.minimum.reduce([o, h, l, c]) > 0, "non-positive price"),
        (h >= np.maximum(o, c), "high < max(open, close)"),
        (l <= np.minimum(o, c), "low > min(open, close)"),
        (v >= 0, "negative volume"),
    ]
    for ok, what in checks:
        bad = np.flatnonzero(~ok)
        if bad.size:
            i = int(bad[0])
            raise InputError(f"{ticker}: bar {i} ({frame['date'].iloc[i]}) fails check: {what}")
    d = frame["date"].to_numpy("datetime64[D]")
    if d.size > 1:
        bad = np.flatnonzero(np.diff(d) <= np.timedelta64(0, "D"))
        if bad.size:
            i = int(bad[0]) + 1
            raise InputError(f"{ticker}: dates not strictly increasing at bar {i} ({d[i]})")


# ---------------------------------------------------------------------------
# Attention resampling / normalization / fusion
# ---------------------------------------------------------------------------


def _covered_slots(grid: np.ndarray, coverage) -> np.ndarray:
    """Per slot: does any coverage span intersect the slot's day interval?

    Slot k owns the days ``(grid[k-1], grid[k]]``; slot 0 owns ``grid[0]`` only.
    ``coverage=None`` means the source covers everything.
    """
    n = len(grid)
    if coverage is None:
        return np.ones(n, dtype=bool)
    lo = np.empty(n, dtype="datetime64[D]")
    if n:
        lo[0] = grid[0]
        lo[1:] = grid[:-1] + np.timedelta64(1, "D")
    covered = np.zeros(n, dtype=bool)
    for start, end in coverage:
        s, e = to_day(start), to_day(end)
        covered |= (lo <= e) & (grid >= s)
    return covered


def resample_source(
    raw: Sequence[AttentionObservation],
    grid,
    mode: str,
    coverage=None,
    *,
    ticker: str = "",
) -> AttentionSeries:
    """Resample raw observations of one source onto the bar grid.

    ``forward_fill`` carries the latest record at or before each bar day
    (NaN before the first one). ``sum_aggregate`` sums observed values whose
    day falls in ``(grid[k-1], grid[k]]``; an empty interval is 0 when the
    source has coverage there and NaN otherwise. ``coverage`` is a list of
    inclusive ``(start, end)`` spans, or None for full coverage.
    """
    if mode not in RESAMPLE_MODES:
        raise ConfigError(f"unknown resample mode {mode!r}; expected one of {RESAMPLE_MODES}")
    grid = as_grid(grid)
    if grid.size > 1:
        bad = np.flatnonzero(np.diff(grid) <= np.timedelta64(0, "D"))
        if bad.size:
            raise InputError(f"grid not strictly increasing at position {int(bad[0]) + 1}")
    for i in range(1, len(raw)):
        if _stamp(raw[i].t) < _stamp(raw[i - 1].t):
            raise InputError(f"raw observations not sorted by timestamp at position {i}")
    days = np.array([to_day(o.t) for o in raw], dtype="datetime64[D]")
    if raw:
        source = raw[0].source
        for i, o in enumerate(raw):
            if o.source != source:
                raise InputError(f"mixed sources in one resample call at position {i}: {o.source!r} vs {source!r}")
    else:
        source = ""

    n = grid.size
    covered = _covered_slots(grid, coverage)
    observed = np.array([o.coverage == "observed" for o in raw], dtype=bool)
    vals = np.array([o.value if o.coverage == "observed" else np.nan for o in raw], dtype=float)
    # slot index = first grid day >= observation day
    slot = np.searchsorted(grid, days, side="left")
    out = np.full(n, np.nan)

    if n == 0:
        return AttentionSeries(source=source, ticker=ticker, dates=grid, values=out)
    if mode == "sum_aggregate":
        # observations before grid[0] or after grid[-1] fall outside the span
        inside = (slot < n) & ((slot > 0) | (days == grid[0]))
        sums = np.zeros(n)
        hits = np.zeros(n, dtype=int)
        missing = np.zeros(n, dtype=bool)
        for k, is_obs, v, ok in zip(slot, observed, vals, inside):
            if not ok:
                continue
            if is_obs:
                sums[k] += v
                hits[k] += 1
            else:
                missing[k] = True
        defined = (covered & ~missing) | (hits > 0)
        out[defined] = sums[defined]
    else:
        # last record with day <= grid[k]
        pos = np.searchsorted(days, grid, side="right") - 1
        has = pos >= 0
        out[has] = vals[pos[has]]
        out[~covered] = np.nan
    return AttentionSeries(source=source, ticker=ticker, dates=grid, values=out)


def normalize_source(values, mode: str = "minmax") -> np.ndarray:
    """Scale one source over its covered (non-NaN) span.

    ``minmax`` maps to [0, 1] (a flat source maps to 0), ``zscore`` uses the
    population standard deviation (flat source maps to 0), ``none`` is identity.
    """
    x = np.asarray(values, dtype=float)
    if mode == "none":
        return x.copy()
    if mode not in NORMALIZATION_MODES:
        raise ConfigError(f"unknown normalization {mode!r}; expected one of {NORMALIZATION_MODES}")
    out = np.full_like(x, np.nan)
    ok = ~np.isnan(x)
    if not ok.any():
        return out
    v = x[ok]
    if mode == "minmax":
        lo, hi = v.min(), v.max()
        out[ok] = (v - lo) / (hi - lo) if hi > lo else 0.0
    else:
        sd = v.std()
        out[ok] = (v - v.mean()) / sd if sd > 0 else 0.0
    return out


def fuse_attention(series: Mapping[str, object], weights: Mapping[str, float]) -> np.ndarray:
    """Weighted fusion of per-source attention onto one channel.

    At each slot the weights of the covered sources are rescaled so they
    carry the full configured weight mass; the slot is NaN only when no
    positively weighted source is covered.
    """
    names = [s for s in series if weights.get(s, 0.0) > 0]
    for s, w in weights.items():
        if not (math.isfinite(w) and w >= 0):
            raise ConfigError(f"attention weight for {s!r} must be finite and >= 0, got {w!r}")
    total = float(sum(weights.get(s, 0.0) for s in names))
    if total <= 0:
        raise ConfigError("attention weights must have positive total over the supplied sources")

    arrays = []
    ref_dates = None
    for s in names:
        item = series[s]
        if isinstance(item, AttentionSeries):
            if ref_dates is None:
                ref_dates = item.dates
            elif len(item.dates) != len(ref_dates) or np.any(item.dates != ref_dates):
                raise AlignmentError(f"source {s!r} is not aligned to the same grid as the other sources")
            arrays.append(np.asarray(item.values, dtype=float))
        else:
            arrays.append(np.asarray(item, dtype=float))
    n = len(arrays[0])
    for s, a in zip(names, arrays):
        if len(a) != n:
            raise AlignmentError(f"source {s!r} has {len(a)} slots, expected {n}")

    vals = np.vstack(arrays)
    w = np.array([weights[s] for s in names], dtype=float)[:, None]
    cov = ~np.isnan(vals)
    mass = (w * cov).sum(axis=0)
    weighted = np.where(cov, vals * w, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        fused = weighted * (total / mass)
    fused[mass == 0] = np.nan
    return fused


# ---------------------------------------------------------------------------
# Price channels
# ---------------------------------------------------------------------------


def compute_log_returns(closes) -> np.ndarray:
    """``r[t] = ln(C[t] / C[t-1])``; the first slot is NaN."""
    c = np.asarray(closes, dtype=float)
    if c.size < 1:
        raise InputError("need at least one close")
    bad = np.flatnonzero(~(c > 0))
    if bad.size:
        raise InputError(f"close at index {int(bad[0])} is not positive: {c[bad[0]]!r}")
    r = np.full(c.size, np.nan)
    r[1:] = np.log(c[1:] / c[:-1])
    return r


def compute_rolling_volatility(returns, L: int, eps: float = 1e-12, include_current: bool = False) -> np.ndarray:
    """Rolling RMS volatility with an ``eps`` floor inside the root.

    By default slot t uses the L returns strictly before t; NaN whenever
    any of them is missing. Each window is summed afresh (no running sums).
    """
    if L < 1:
        raise InputError(f"volatility lookback must be >= 1, got {L}")
    if not eps > 0:
        raise InputError(f"eps must be > 0, got {eps}")
    r = np.asarray(returns, dtype=float)
    n = r.size
    out = np.full(n, np.nan)
    if n < L:
        return out
    ms = sliding_window_view(r * r, L).mean(axis=1)  # ms[j] covers r[j:j+L]
    sig = np.sqrt(ms + eps)
    if include_current:
        out[L - 1 :] = sig
    else:
        out[L:] = sig[: n - L]
    return out


def compute_range_proxy(high, low, close) -> np.ndarray:
    """Within-bar range ``(H[t] - L[t]) / C[t-1]``; NaN at the first bar."""
    h, l, c = (np.asarray(a, dtype=float) for a in (high, low, close))
    out = np.full(h.size, np.nan)
    out[1:] = (h[1:] - l[1:]) / c[:-1]
    return out


def compute_ewma_volatility(returns, lam: float = 0.94, eps: float = 1e-12) -> np.ndarray:
    """RiskMetrics-style EWMA volatility.

    The variance is seeded with the first available squared return. A NaN
    return yields NaN volatility at that slot and leaves the variance as is.
    """
    if not 0 < lam < 1:
        raise InputError(f"EWMA decay must lie in (0, 1), got {lam}")
    r = np.asarray(returns, dtype=float)
    out = np.full(r.size, np.nan)
    v = None
    for t, x in enumerate(r):
        if math.isnan(x):
            continue
        v = x * x if v is None else lam * v + (1.0 - lam) * x * x
        out[t] = math.sqrt(v + eps)
    return out


# ---------------------------------------------------------------------------
# Panel assembly
# ---------------------------------------------------------------------------

PANEL_CHANNELS = ["r", "sigma", "range_proxy", "sigma_ewma", "A"]


def build_ticker_panel(
    ticker: str,
    bars: pd.DataFrame,
    attention: Mapping[str, AttentionSeries],
    *,
    sources: Sequence[str],
    weights: Mapping[str, float],
    vol_lookback: int = 20,
    eps: float = 1e-12,
    ewma_lambda: float = 0.94,
    normalization: str = "minmax",
    vol_include_current: bool = False,
) -> pd.DataFrame:
    """Build the panel rows of a single ticker.

    Per-source columns hold the normalized values that feed the fusion.
    Sources missing from ``attention`` are treated as never covered.
    """
    validate_bars(bars, ticker)
    grid = bars["date"].to_numpy("datetime64[D]")
    n = grid.size
    per_source: dict[str, np.ndarray] = {}
    for s in sources:
        ser = attention.get(s)
        if ser is None:
            per_source[s] = np.full(n, np.nan)
            continue
        if len(ser.dates) != n or np.any(ser.dates != grid):
            mism = _first_mismatch(grid, ser.dates)
            raise AlignmentError(f"ticker {ticker}: source {s!r} grid does not match bars at {mism}")
        per_source[s] = normalize_source(ser.values, normalization)

    r = compute_log_returns(bars["close"].to_numpy(float))
    frame = pd.DataFrame({"ticker": ticker, "date": grid})
    frame["r"] = r
    frame["sigma"] = compute_rolling_volatility(r, vol_lookback, eps, include_current=vol_include_current)
    frame["range_proxy"] = compute_range_proxy(bars["high"], bars["low"], bars["close"])
    frame["sigma_ewma"] = compute_ewma_volatility(r, ewma_lambda, eps)
    if n == 0:
        frame["A"] = np.array([], dtype=float)
    else:
        frame["A"] = fuse_attention(per_source, {s: weights.get(s, 0.0) for s in sources})
    for s in sources:
        frame[s] = per_source[s]
    return frame


def _first_mismatch(grid: np.ndarray, other: np.ndarray) -> str:
    for i in range(max(len(grid), len(other))):
        a = grid[i] if i < len(grid) else None
        b = other[i] if i < len(other) else None
        if a is None or b is None or a != b:
            return f"slot {i} (bars: {a}, attention: {b})"
    return "unknown slot"


def build_panel(
    bars: Mapping[str, pd.DataFrame],
    attention: Mapping[str, Mapping[str, AttentionSeries]],
    cfg,
) -> dict[str, pd.DataFrame]:
    """Build one panel frame per ticker, tickers in lexical order."""
    out = {}
    for ticker in sorted(bars):
        out[ticker] = build_ticker_panel(
            ticker,
            bars[ticker],
            attention.get(ticker, {}),
            sources=cfg.attention_sources,
            weights=cfg.source_weights,
            vol_lookback=cfg.vol_lookback,
            eps=cfg.eps,
            ewma_lambda=cfg.ewma_lambda,
            normalization=cfg.normalization,
            vol_include_current=cfg.vol_include_current,
        )
    return out
