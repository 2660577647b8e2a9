"""Seeded synthetic data: attention proxies, price paths and labeled
co-movement episodes for detector validation.

Proxy process: ``base + noise + sum_i magnitude * 2**(-(t - t_i) / half_life)``
clipped at zero, where spike times ``t_i`` come from an independent
Bernoulli draw per bar (rate per 100 bars) and the noise is Gaussian
truncated at three standard deviations. Default parameters are not
calibrated to any real platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .baseline import rolling_baseline
from .errors import InputError
from .panel import (
    AttentionSeries,
    OHLCV_COLUMNS,
    compute_log_returns,
    compute_rolling_volatility,
    fuse_attention,
    normalize_source,
)

DEFAULT_START = "2024-01-08"
_MARGIN = 1e-9


@dataclass(frozen=True)
class ProxySpec:
    source: str
    base_level: float = 10.0
    noise_scale: float = 1.0
    spike_rate: float = 3.0
    spike_magnitude: float = 20.0
    decay_half_life: float = 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ("base_level", "noise_scale", "spike_rate", "spike_magnitude"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InputError(f"ProxySpec.{name} must be finite and >= 0, got {v}")
        if not (math.isfinite(self.decay_half_life) and self.decay_half_life > 0):
            raise InputError(f"ProxySpec.decay_half_life must be > 0, got {self.decay_half_life}")


@dataclass(frozen=True)
class EpisodeSpec:
    ticker: str
    start_idx: int
    length: int
    return_z_target: float = 5.0
    vol_z_target: float = 5.0
    attention_z_target: float = 5.0
    seed: int = 0
    # exact=True pins return and attention z to the target magnitude instead
    # of raising them to at least the target; volatility is then left alone
    exact: bool = False

    @property
    def end_idx(self) -> int:
        return self.start_idx + self.length - 1

    def __post_init__(self):
        if self.length < 1:
            raise InputError(f"episode length must be >= 1, got {self.length}")
        for name in ("return_z_target", "vol_z_target", "attention_z_target"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"EpisodeSpec.{name} must be finite")


@dataclass(frozen=True)
class LabelRecord:
    ticker: str
    start_idx: int
    end_idx: int
    start_date: np.datetime64
    end_date: np.datetime64
    return_z: float
    vol_z: float
    attention_z: float
    seed: int
    achieved: dict = field(default_factory=dict, compare=False)

    @property
    def span(self) -> range:
        return range(self.start_idx, self.end_idx + 1)


def business_grid(n_bars: int, start: str = DEFAULT_START) -> np.ndarray:
    """``n_bars`` consecutive weekdays starting at (or after) ``start``."""
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n_bars), roll="forward").astype("datetime64[D]")


def generate_proxy(spec: ProxySpec, n_bars: int, *, grid=None, ticker: str = "") -> AttentionSeries:
    if n_bars < 1:
        raise InputError(f"n_bars must be >= 1, got {n_bars}")
    rng = np.random.default_rng(spec.seed)
    noise = np.clip(rng.standard_normal(n_bars), -3.0, 3.0) * spec.noise_scale
    spikes = np.flatnonzero(rng.random(n_bars) < spec.spike_rate / 100.0)
    t = np.arange(n_bars)
    level = np.zeros(n_bars)
    for t0 in spikes:
        age = t[t0:] - t0
        level[t0:] += spec.spike_magnitude * np.exp2(-age / spec.decay_half_life)
    values = np.maximum(spec.base_level + noise + level, 0.0)
    dates = business_grid(n_bars) if grid is None else np.asarray(grid, dtype="datetime64[D]")
    if len(dates) != n_bars:
        raise InputError(f"grid has {len(dates)} slots but n_bars={n_bars}")
    return AttentionSeries(source=spec.source, ticker=ticker, dates=dates, values=values)


def simulate_bars(
    grid,
    seed: int,
    *,
    start_price: float = 50.0,
    daily_vol: float = 0.02,
    stale_runs: Sequence[tuple[int, int]] = (),
) -> pd.DataFrame:
    """Gaussian log-random-walk daily bars with consistent OHLC.

    ``stale_runs`` lists inclusive ``(first, last)`` bar ranges whose close
    does not move (a thin or halted name); their bars are flat dojis.
    """
    grid = np.asarray(grid, dtype="datetime64[D]")
    n = grid.size
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(n) * daily_vol
    r[0] = 0.0
    flat = np.zeros(n, dtype=bool)
    for a, b in stale_runs:
        flat[a : b + 1] = True
    r[flat] = 0.0
    close = start_price * np.exp(np.cumsum(r))
    prev = np.concatenate([[close[0]], close[:-1]])
    open_ = prev * np.exp(rng.standard_normal(n) * daily_vol * 0.25)
    wick_hi = np.abs(rng.standard_normal(n)) * daily_vol * 0.5
    wick_lo = np.abs(rng.standard_normal(n)) * daily_vol * 0.5
    high = np.maximum(open_, close) * np.exp(wick_hi)
    low = np.minimum(open_, close) * np.exp(-wick_lo)
    open_[flat] = close[flat]
    high[flat] = close[flat]
    low[flat] = close[flat]
    volume = np.round(rng.lognormal(mean=13.0, sigma=0.4, size=n))
    return pd.DataFrame(
        {"date": grid, "open": open_, "high": high, "low": low, "close": close, "volume": volume},
        columns=OHLCV_COLUMNS,
    )


# ---------------------------------------------------------------------------
# Episode injection
# ---------------------------------------------------------------------------


def _fused_attention(attention: Mapping[str, np.ndarray], sources, weights, normalization) -> np.ndarray:
    normed = {s: normalize_source(attention[s], normalization) for s in sources if s in attention}
    return fuse_attention(normed, {s: weights.get(s, 0.0) for s in normed})


def _baseline_at(x: np.ndarray, t: int, B: int, eps: float) -> tuple[float, float]:
    """Trailing baseline of slot t, computed by the detector's own code."""
    if t < B:
        return math.nan, math.nan
    st = rolling_baseline(x[t - B : t + 1], B, eps)
    return float(st.mu[-1]), float(st.sigma_hat[-1])


def _z_at(x: np.ndarray, t: int, B: int, eps: float) -> float:
    mu, sd = _baseline_at(x, t, B, eps)
    if math.isnan(mu) or math.isnan(x[t]):
        return math.nan
    return (x[t] - mu) / (sd + eps)


def inject_episode(
    bars: pd.DataFrame,
    attention: Mapping[str, AttentionSeries],
    spec: EpisodeSpec,
    cfg,
) -> tuple[pd.DataFrame, dict[str, AttentionSeries], LabelRecord]:
    """Perturb one ticker's closes and attention so each episode bar reaches
    the requested z-scores under the configured baselines.

    Bars are processed in order against the already-perturbed history, so
    each baseline is exactly the one the detector will see. Targets <= 0
    leave their channel untouched. By default each channel is raised to at
    least its target; ``spec.exact`` pins return and attention z to the
    target magnitude instead and leaves volatility to follow the returns.

    With volatility measured on prior bars only, the first episode bar's
    volatility is fixed by history, so its target is not enforced there;
    ``achieved`` in the label records what every bar actually reached.
    Closes after the episode are rescaled to keep their returns unchanged,
    and open/high/low of every shifted bar move with the close.
    """
    n = len(bars)
    B, L, eps = cfg.baseline_window, cfg.vol_lookback, cfg.eps
    first_ok = B + L
    if spec.start_idx < first_ok:
        raise InputError(
            f"{spec.ticker}: episode at bar {spec.start_idx} overlaps the warm-up region (first usable bar {first_ok})"
        )
    if spec.end_idx >= n:
        raise InputError(f"{spec.ticker}: episode ends at bar {spec.end_idx} beyond the last bar {n - 1}")
    rng = np.random.default_rng(spec.seed)
    direction = 1.0 if rng.random() < 0.5 else -1.0
    episode = range(spec.start_idx, spec.end_idx + 1)

    close = bars["close"].to_numpy(float)
    r = compute_log_returns(close)
    r_new = r.copy()
    if spec.exact:
        if spec.return_z_target > 0:
            for t in episode:
                mu, sd = _baseline_at(r_new, t, B, eps)
                r_new[t] = mu + direction * spec.return_z_target * (sd + eps)
    elif spec.return_z_target > 0 or spec.vol_z_target > 0:
        for t in episode:
            if spec.return_z_target > 0:
                mu, sd = _baseline_at(r_new, t, B, eps)
                if abs(_z_at(r_new, t, B, eps)) < spec.return_z_target:
                    r_new[t] = mu + direction * spec.return_z_target * (1 + _MARGIN) * (sd + eps)
            tv = t if cfg.vol_include_current else t + 1
            if spec.vol_z_target > 0 and tv in episode:
                sig = compute_rolling_volatility(r_new, L, eps, cfg.vol_include_current)
                mu_s, sd_s = _baseline_at(sig, tv, B, eps)
                need = mu_s + spec.vol_z_target * (1 + _MARGIN) * (sd_s + eps)
                lo = tv - L + 1 if cfg.vol_include_current else tv - L
                others = float(np.sum(r_new[lo : lo + L] ** 2) - r_new[t] ** 2)
                req = L * (need * need - eps) - others
                if req > r_new[t] ** 2:
                    sign = math.copysign(1.0, r_new[t]) if r_new[t] != 0 else direction
                    r_new[t] = sign * math.sqrt(req) * (1 + _MARGIN)
    factor = np.ones(n)
    changed = np.flatnonzero((r_new != r) & ~np.isnan(r))
    if changed.size:
        delta = np.zeros(n)
        delta[changed] = r_new[changed] - r[changed]
        factor = np.exp(np.cumsum(delta))
    new_bars = bars.copy()
    for c in ("open", "high", "low", "close"):
        new_bars[c] = bars[c].to_numpy(float) * factor

    sources = list(cfg.attention_sources)
    raw = {s: np.asarray(attention[s].values, dtype=float).copy() for s in sources if s in attention}
    if spec.attention_z_target > 0:
        _inject_attention(raw, spec, cfg, episode)
    new_att = {
        s: replace(attention[s], values=raw[s]) if s in raw else attention[s] for s in attention
    }

    A = _fused_attention(raw, sources, cfg.source_weights, cfg.normalization)
    r_fin = compute_log_returns(new_bars["close"].to_numpy(float))
    sig_fin = compute_rolling_volatility(r_fin, L, eps, cfg.vol_include_current)
    achieved = {
        "return_z": [abs(_z_at(r_fin, t, B, eps)) for t in episode],
        "vol_z": [_z_at(sig_fin, t, B, eps) for t in episode],
        "attention_z": [_z_at(A, t, B, eps) for t in episode],
    }
    dates = bars["date"].to_numpy("datetime64[D]")
    label = LabelRecord(
        ticker=spec.ticker,
        start_idx=spec.start_idx,
        end_idx=spec.end_idx,
        start_date=dates[spec.start_idx],
        end_date=dates[spec.end_idx],
        return_z=spec.return_z_target,
        vol_z=spec.vol_z_target,
        attention_z=spec.attention_z_target,
        seed=spec.seed,
        achieved=achieved,
    )
    return new_bars, new_att, label


def _inject_attention(raw: dict[str, np.ndarray], spec: EpisodeSpec, cfg, episode: range) -> None:
    """Shift covered sources at each episode bar by a common multiple of
    their own spread until the fused z-score reaches the target.

    Later bars can move the min-max scale of earlier ones, so passes repeat
    until every bar holds its target at once.
    """
    sources = [s for s in cfg.attention_sources if s in raw and cfg.source_weights.get(s, 0.0) > 0]
    B, eps = cfg.baseline_window, cfg.eps
    unit = {}
    for s in sources:
        v = raw[s][~np.isnan(raw[s])]
        unit[s] = float(v.std()) if v.size and v.std() > 0 else 1.0
    goal = spec.attention_z_target
    if spec.exact:
        aim, tol = goal, 1e-7 * max(1.0, goal)
    else:
        # aim slightly high so later bars shifting the scale settle fast
        aim, tol = goal * (1 + 1e-6), 0.0
    base = {s: raw[s].copy() for s in sources}
    amps = {t: 0.0 for t in episode}

    def z_with(t: int, amp: float) -> float:
        trial = dict(raw)
        for s in sources:
            col = raw[s].copy()
            if not math.isnan(col[t]):
                col[t] = max(base[s][t] + amp * unit[s], 0.0)
            trial[s] = col
        A = _fused_attention(trial, sources, cfg.source_weights, cfg.normalization)
        return _z_at(A, t, B, eps)

    def met(z: float) -> bool:
        if spec.exact:
            return abs(z - goal) <= tol
        return z >= goal * (1 + _MARGIN)

    for _ in range(50):
        all_met = True
        for t in episode:
            covered = [s for s in sources if not math.isnan(raw[s][t])]
            if not covered:
                raise InputError(f"{spec.ticker}: no attention source covers episode bar {t}")
            z0 = z_with(t, amps[t])
            if math.isnan(z0):
                raise InputError(f"{spec.ticker}: attention baseline undefined at episode bar {t}")
            if met(z0):
                continue
            all_met = False
            floor = min(-base[s][t] / unit[s] for s in covered)
            if z0 < aim:
                lo, hi = amps[t], max(1.0, 2 * abs(amps[t]))
                while z_with(t, hi) < aim:
                    lo, hi = hi, hi * 2
                    if hi > 1e12:
                        raise InputError(f"{spec.ticker}: attention target unreachable at bar {t}")
            else:
                lo, hi = floor, amps[t]
                if z_with(t, lo) > aim:
                    raise InputError(f"{spec.ticker}: attention at bar {t} cannot be lowered to z={goal}")
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if z_with(t, mid) >= aim:
                    hi = mid
                else:
                    lo = mid
            amps[t] = hi
            for s in covered:
                raw[s][t] = max(base[s][t] + hi * unit[s], 0.0)
        if all_met:
            return
    raise InputError(f"{spec.ticker}: attention injection did not converge")


# ---------------------------------------------------------------------------
# Market fixtures
# ---------------------------------------------------------------------------


@dataclass
class SyntheticMarket:
    bars: dict[str, pd.DataFrame]
    attention: dict[str, dict[str, AttentionSeries]]
    labels: list[LabelRecord] = field(default_factory=list)

    @property
    def tickers(self) -> list[str]:
        return sorted(self.bars)


def _child_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0])


def synthetic_market(
    n_tickers: int = 24,
    n_bars: int = 248,
    seed: int = 2024,
    *,
    sources: Sequence[str] = ("reddit", "stocktwits", "wikipedia", "news", "trends"),
    covered_sources: Sequence[str] | None = None,
    stale_fraction: float = 0.0,
    start: str = DEFAULT_START,
) -> SyntheticMarket:
    """A seeded market of ``n_tickers`` names with one proxy per source.

    Sources outside ``covered_sources`` (default: all) are never covered.
    A ``stale_fraction`` of tickers get a flat-price stretch of 45 bars that
    ends somewhere in the middle of the sample.
    """
    grid = business_grid(n_bars, start)
    covered = set(sources if covered_sources is None else covered_sources)
    bars, attention = {}, {}
    n_stale = int(round(stale_fraction * n_tickers))
    for i in range(n_tickers):
        ticker = f"SYN{i:02d}"
        rng = np.random.default_rng(_child_seed(seed, i, 0))
        vol = float(rng.uniform(0.01, 0.04))
        price = float(rng.uniform(10, 300))
        stale = ()
        if i < n_stale and n_bars > 120:
            end = int(rng.integers(80, n_bars - 30))
            stale = ((end - 44, end),)
        bars[ticker] = simulate_bars(grid, _child_seed(seed, i, 1), start_price=price, daily_vol=vol, stale_runs=stale)
        attention[ticker] = {}
        for j, s in enumerate(sources):
            prng = np.random.default_rng(_child_seed(seed, i, 100 + j))
            spec = ProxySpec(
                source=s,
                base_level=float(prng.uniform(5, 50)),
                noise_scale=float(prng.uniform(0.5, 3)),
                spike_rate=float(prng.uniform(1, 5)),
                spike_magnitude=float(prng.uniform(10, 60)),
                decay_half_life=float(prng.uniform(1, 5)),
                seed=_child_seed(seed, i, 200 + j),
            )
            ser = generate_proxy(spec, n_bars, grid=grid, ticker=ticker)
            if s not in covered:
                ser = replace(ser, values=np.full(n_bars, np.nan))
            attention[ticker][s] = ser
    return SyntheticMarket(bars, attention)


def place_isolated_episodes(
    n_bars: int,
    count: int,
    length: int,
    spacing: int,
    first: int,
    rng: np.random.Generator,
) -> list[int]:
    """Start indices for ``count`` episodes separated by at least ``spacing``
    bars between one episode's end and the next one's start."""
    starts = []
    pos = first
    for _ in range(count):
        pos += int(rng.integers(0, max(1, spacing // 2)))
        if pos + length - 1 >= n_bars:
            break
        starts.append(pos)
        pos += length + spacing
    return starts


def inject_all(market: SyntheticMarket, specs: Sequence[EpisodeSpec], cfg) -> SyntheticMarket:
    """Apply episodes in chronological order per ticker."""
    bars = dict(market.bars)
    att = {t: dict(v) for t, v in market.attention.items()}
    labels = list(market.labels)
    for spec in sorted(specs, key=lambda e: (e.ticker, e.start_idx)):
        b, a, lab = inject_episode(bars[spec.ticker], att[spec.ticker], spec, cfg)
        bars[spec.ticker] = b
        att[spec.ticker] = a
        labels.append(lab)
    return SyntheticMarket(bars, att, labels)


def coverage_spans(series: AttentionSeries) -> list[tuple[np.datetime64, np.datetime64]]:
    """Contiguous covered stretches of a grid-aligned series."""
    ok = ~np.isnan(np.asarray(series.values, dtype=float))
    spans = []
    i = 0
    n = ok.size
    while i < n:
        if ok[i]:
            j = i
            while j + 1 < n and ok[j + 1]:
                j += 1
            spans.append((series.dates[i], series.dates[j]))
            i = j + 1
        else:
            i += 1
    return spans


def write_market(market: SyntheticMarket, directory, sources: Sequence[str] | None = None) -> dict[str, Path]:
    """Write OHLCV, attention files (with coverage) and labels under ``directory``."""
    from .io import write_attention_series, write_labels, write_ohlcv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ohlcv = directory / "ohlcv.csv"
    write_ohlcv(ohlcv, market.bars)
    att_dir = directory / "attention"
    if sources is None:
        sources = sorted({s for per in market.attention.values() for s in per})
    for s in sources:
        series = {t: market.attention[t][s] for t in market.attention if s in market.attention[t]}
        cov = {t: coverage_spans(ser) for t, ser in series.items()}
        write_attention_series(att_dir, s, series, cov)
    labels = directory / "labels.csv"
    write_labels(labels, market.labels)
    return {"ohlcv": ohlcv, "attention": att_dir, "labels": labels}
