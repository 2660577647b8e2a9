"""Window factors, Integrity Score aggregation, ranking and attribution tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, ScoringError
from .segmentation import Window

FACTOR_NAMES = ("phi1", "phi2", "phi3", "phi4", "phi5", "phi6")
FACTOR_LABELS = {
    "phi1": "Return shock",
    "phi2": "Volatility",
    "phi3": "Attention",
    "phi4": "Alignment",
    "phi5": "Recurrence",
    "phi6": "Disagreement",
}
SCALE_MODES = ("none", "zscore")


@dataclass(frozen=True)
class PhiVector:
    phi1: float = 0.0
    phi2: float = 0.0
    phi3: float = 0.0
    phi4: float = 0.0
    phi5: int = 0
    phi6: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3, self.phi4, float(self.phi5), self.phi6])


@dataclass(frozen=True)
class ScoredWindow:
    window: Window
    phi: PhiVector
    scaled: tuple[float, ...]
    contributions: tuple[float, ...]
    M: float
    rank_pct: float
    provisional_M: float
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def window_id(self) -> int | None:
        return self.window.window_id

    @property
    def ticker(self) -> str:
        return self.window.ticker


# ---------------------------------------------------------------------------
# Per-window factors
# ---------------------------------------------------------------------------


def _finite(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z[~np.isnan(z)]


def phi1(z_r) -> float:
    """Return-shock intensity: sum of squared return z-scores (NaN bars skipped)."""
    v = _finite(z_r)
    return float(np.sum(v * v))


def phi2(z_sigma) -> float:
    """Volatility anomaly: sum of the positive part of the volatility z-scores."""
    return float(np.sum(np.maximum(_finite(z_sigma), 0.0)))


def phi3(z_A) -> float:
    """Attention spike: sum of the positive part of the attention z-scores."""
    return float(np.sum(np.maximum(_finite(z_A), 0.0)))


def pearson(x, y) -> tuple[float, bool]:
    """Pearson correlation over pairwise-complete entries.

    Returns ``(value, usable)``. Fewer than two complete pairs gives
    ``(0.0, False)``; an exactly constant input gives ``(0.0, True)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    if x.size < 2:
        return 0.0, False
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0, True
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    if den == 0:
        return 0.0, True
    c = float(np.dot(dx, dy)) / den
    return min(1.0, max(-1.0, c)), True


def phi4(z_r, z_sigma, z_A, clamp: bool = False) -> float:
    """Co-movement: mean of Corr(z_r, z_A) and Corr(z_sigma, z_A)."""
    return phi4_detail(z_r, z_sigma, z_A, clamp)[0]


def phi4_detail(z_r, z_sigma, z_A, clamp: bool = False) -> tuple[float, bool]:
    c1, ok1 = pearson(z_r, z_A)
    c2, ok2 = pearson(z_sigma, z_A)
    v = 0.5 * (c1 + c2)
    if clamp:
        v = max(v, 0.0)
    return v, ok1 and ok2


def phi5(
    windows: Sequence[Window],
    provisional_M: Sequence[float],
    delta_recur: float = 10,
    tau_recur: float = math.inf,
) -> list[int]:
    """Temporal recurrence: for each window, the number of other same-ticker
    windows closer than ``delta_recur`` bars (nearer-edge distance) whose
    provisional score exceeds ``tau_recur``."""
    M = np.asarray(provisional_M, dtype=float)
    if len(windows) != M.size:
        raise ScoringError("phi5 needs one provisional score per window")
    counts = [0] * len(windows)
    by_ticker: dict[str, list[int]] = {}
    for i, w in enumerate(windows):
        by_ticker.setdefault(w.ticker, []).append(i)
    for idx in by_ticker.values():
        for i in idx:
            wi = windows[i]
            n = 0
            for j in idx:
                if j == i or not M[j] > tau_recur:
                    continue
                wj = windows[j]
                if window_distance(wi, wj) < delta_recur:
                    n += 1
            counts[i] = n
    return counts


def window_distance(a: Window, b: Window) -> int:
    """Bar distance between nearer edges; 0 if the windows overlap."""
    if a.end_idx < b.start_idx:
        return b.start_idx - a.end_idx
    if b.end_idx < a.start_idx:
        return a.start_idx - b.end_idx
    return 0


def phi6(source_z: Mapping[str, object]) -> float:
    return phi6_detail(source_z)[0]


def phi6_detail(source_z: Mapping[str, object]) -> tuple[float, bool]:
    """Disagreement penalty: minus the population std of all per-source
    z-scores pooled over the window. Needs two or more sources with data."""
    pooled = []
    active = 0
    for z in source_z.values():
        v = _finite(z)
        if v.size:
            active += 1
            pooled.append(v)
    if active < 2:
        return 0.0, False
    allv = np.concatenate(pooled)
    return -float(allv.std()), True


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def scale_phi(phi: np.ndarray, mode: str = "none") -> np.ndarray:
    """Per-factor scaling across the window population.

    ``zscore`` uses the population std; a factor with zero spread maps to 0.
    """
    phi = np.asarray(phi, dtype=float)
    if mode == "none":
        return phi.copy()
    if mode != "zscore":
        raise ConfigError(f"unknown scale mode {mode!r}; expected one of {SCALE_MODES}")
    if phi.ndim != 2 or phi.shape[0] == 0:
        return phi.copy()
    out = np.zeros_like(phi)
    for k in range(phi.shape[1]):
        col = phi[:, k]
        if np.ptp(col) == 0:
            continue
        sd = col.std()
        if sd > 0:
            out[:, k] = (col - col.mean()) / sd
    return out


def integrity_score(phi_scaled, omega) -> tuple[float, np.ndarray]:
    """Weighted sum of the (scaled) factors together with its per-factor terms."""
    phi_scaled = np.asarray(phi_scaled, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (6,) or not np.all(np.isfinite(omega)):
        raise ConfigError(f"need six finite factor weights, got {omega!r}")
    if not np.all(np.isfinite(phi_scaled)):
        raise ScoringError(f"non-finite factor values reached the score: {phi_scaled!r}")
    contrib = omega * phi_scaled
    return math.fsum(contrib), contrib


def rank_percentiles(M) -> np.ndarray:
    """Share of windows scoring at or below each window; the top is 1.0."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.array([], dtype=float)
    sorted_M = np.sort(M)
    return np.searchsorted(sorted_M, M, side="right") / M.size


def window_slice(dev: pd.DataFrame, w: Window) -> pd.DataFrame:
    return dev.iloc[w.start_idx : w.end_idx + 1]


def raw_factors(w: Window, dev: pd.DataFrame, sources: Sequence[str], clamp_phi4: bool = False):
    """Factors other than recurrence for one window, plus data-gap markers."""
    rows = window_slice(dev, w)
    z_r = rows["z_r"].to_numpy(float)
    z_s = rows["z_sigma"].to_numpy(float)
    z_a = rows["z_A"].to_numpy(float)
    flags = []
    for name, z in (("phi1", z_r), ("phi2", z_s), ("phi3", z_a)):
        if np.all(np.isnan(z)):
            flags.append(f"insufficient_data:{name}")
    p4, ok4 = phi4_detail(z_r, z_s, z_a, clamp_phi4)
    if not ok4:
        flags.append("insufficient_data:phi4")
    src = {s: rows[f"z_{s}"].to_numpy(float) for s in sources if f"z_{s}" in rows}
    p6, ok6 = phi6_detail(src)
    if not ok6:
        flags.append("insufficient_data:phi6")
    vec = [phi1(z_r), phi2(z_s), phi3(z_a), p4, 0.0, p6]
    return vec, flags


def score_windows(windows: Sequence[Window], deviations: Mapping[str, pd.DataFrame], cfg) -> list[ScoredWindow]:
    """Two-pass scoring.

    Pass one scores every window with the recurrence weight forced to zero;
    those provisional scores drive the recurrence counts, after which the
    final scores, contributions and rank percentiles are computed.
    """
    if not windows:
        return []
    omega = np.array(cfg.omega, dtype=float)
    sources = list(cfg.attention_sources)
    raw = np.zeros((len(windows), 6))
    flags: list[list[str]] = []
    for i, w in enumerate(windows):
        vec, fl = raw_factors(w, deviations[w.ticker], sources, cfg.clamp_phi4)
        raw[i] = vec
        flags.append(fl)

    omega_prov = omega.copy()
    omega_prov[4] = 0.0
    scaled_prov = scale_phi(raw, cfg.scale)
    provisional = np.array([integrity_score(row, omega_prov)[0] for row in scaled_prov])
    raw[:, 4] = phi5(windows, provisional, cfg.delta_recur, cfg.tau_recur)

    scaled = scale_phi(raw, cfg.scale)
    scores = [integrity_score(row, omega) for row in scaled]
    M = np.array([m for m, _ in scores])
    ranks = rank_percentiles(M)

    cap = cfg.artifact_z_cap
    out = []
    for i, w in enumerate(windows):
        fl = list(flags[i])
        if w.contains_warmup:
            fl.append("warmup")
        if cap is not None and _exceeds_cap(window_slice(deviations[w.ticker], w), cap):
            fl.append("z_cap")
        phi = PhiVector(*raw[i, :4], int(raw[i, 4]), raw[i, 5])
        out.append(
            ScoredWindow(
                window=w,
                phi=phi,
                scaled=tuple(float(v) for v in scaled[i]),
                contributions=tuple(float(v) for v in scores[i][1]),
                M=float(M[i]),
                rank_pct=float(ranks[i]),
                provisional_M=float(provisional[i]),
                flags=tuple(fl),
            )
        )
    return out


def _exceeds_cap(rows: pd.DataFrame, cap: float) -> bool:
    z = rows[["z_r", "z_sigma", "z_A"]].to_numpy(float)
    return bool(np.nanmax(np.abs(z), initial=0.0) > cap)


def rank_order(scored: Sequence[ScoredWindow]) -> list[ScoredWindow]:
    """Descending score, ties broken by window id."""
    return sorted(scored, key=lambda sw: (-sw.M, sw.window_id if sw.window_id is not None else -1))


# ---------------------------------------------------------------------------
# Attribution tables
# ---------------------------------------------------------------------------


def contribution_stats(scored: Sequence[ScoredWindow]) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-factor statistics.

    Returns ``(attribution, factor_stats)``. ``attribution`` summarizes the
    weighted contributions (``signal, mean, median, abs_mean_share,
    nonzero_pct``); ``factor_stats`` summarizes raw factor values
    (``factor, label, mean, median, max, std, nonzero_pct``). Percentages are
    on a 0-100 scale; ``std`` is the sample standard deviation.
    """
    n = len(scored)
    contrib = np.array([sw.contributions for sw in scored], dtype=float).reshape(n, 6)
    raw = np.array([sw.phi.as_array() for sw in scored], dtype=float).reshape(n, 6)

    abs_mean = np.abs(contrib).mean(axis=0) if n else np.zeros(6)
    total = abs_mean.sum()
    share = 100.0 * abs_mean / total if total > 0 else np.zeros(6)

    def _col(a, fn):
        return [float(fn(a[:, k])) if n else 0.0 for k in range(6)]

    attribution = pd.DataFrame(
        {
            "signal": list(FACTOR_NAMES),
            "mean": _col(contrib, np.mean),
            "median": _col(contrib, np.median),
            "abs_mean_share": share,
            "nonzero_pct": _col(contrib, lambda c: 100.0 * np.count_nonzero(c) / c.size),
        }
    )
    factor_stats = pd.DataFrame(
        {
            "factor": list(FACTOR_NAMES),
            "label": [FACTOR_LABELS[f] for f in FACTOR_NAMES],
            "mean": _col(raw, np.mean),
            "median": _col(raw, np.median),
            "max": _col(raw, np.max),
            "std": _col(raw, lambda c: c.std(ddof=1) if c.size > 1 else 0.0),
            "nonzero_pct": _col(raw, lambda c: 100.0 * np.count_nonzero(c) / c.size),
        }
    )
    return attribution, factor_stats


TICKER_SUMMARY_COLUMNS = [
    "ticker",
    "windows",
    "mean_M",
    "median_M",
    "max_M",
    "std_M",
    "mean_bars",
    "total_bars",
    "coverage_pct",
]


def ticker_summary(
    scored: Sequence[ScoredWindow],
    panel: Mapping[str, pd.DataFrame],
) -> pd.DataFrame:
    """Per-ticker window statistics. Tickers without windows keep a zero row.

    ``coverage_pct`` is the share of bars with a defined fused attention
    value (OHLCV is complete by construction). ``std_M`` is the sample std.
    """
    tickers = sorted(set(panel) | {sw.ticker for sw in scored})
    rows = []
    for t in tickers:
        mine = [sw for sw in scored if sw.ticker == t]
        M = np.array([sw.M for sw in mine], dtype=float)
        bars = np.array([sw.window.n_bars for sw in mine], dtype=float)
        if t in panel and len(panel[t]):
            cov = 100.0 * float(np.mean(~np.isnan(panel[t]["A"].to_numpy(float))))
        else:
            cov = 0.0
        if mine:
            rows.append(
                [
                    t,
                    len(mine),
                    float(M.mean()),
                    float(np.median(M)),
                    float(M.max()),
                    float(M.std(ddof=1)) if M.size > 1 else 0.0,
                    float(bars.mean()),
                    int(bars.sum()),
                    cov,
                ]
            )
        else:
            rows.append([t, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, cov])
    frame = pd.DataFrame(rows, columns=TICKER_SUMMARY_COLUMNS)
    return frame.sort_values(["max_M", "ticker"], ascending=[False, True], kind="stable").reset_index(drop=True)
