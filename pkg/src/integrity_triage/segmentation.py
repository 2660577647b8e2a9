"""Two-threshold hysteresis segmentation of the strength series."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, StructuralError


@dataclass(frozen=True)
class Window:
    """Contiguous detected interval; ``start_idx``/``end_idx`` are inclusive bar indices."""

    ticker: str
    start_idx: int
    end_idx: int
    start_ts: np.datetime64 | None = None
    end_ts: np.datetime64 | None = None
    contains_warmup: bool = False
    window_id: int | None = None

    @property
    def n_bars(self) -> int:
        return self.end_idx - self.start_idx + 1

    @property
    def span(self) -> range:
        return range(self.start_idx, self.end_idx + 1)


def _check_params(thr_high: float, thr_low: float, gap: int, min_len: int) -> None:
    if thr_high < thr_low:
        raise ConfigError(f"thr_high ({thr_high}) must be >= thr_low ({thr_low})")
    if gap < 0:
        raise ConfigError(f"gap tolerance must be >= 0, got {gap}")
    if min_len < 1:
        raise ConfigError(f"minimum window length must be >= 1, got {min_len}")


def _make_window(ticker, start, end, dates, warmup) -> Window:
    return Window(
        ticker=ticker,
        start_idx=start,
        end_idx=end,
        start_ts=None if dates is None else dates[start],
        end_ts=None if dates is None else dates[end],
        contains_warmup=False if warmup is None else bool(np.any(warmup[start : end + 1])),
    )


def hysteresis_segment(
    s,
    thr_high: float,
    thr_low: float,
    gap: int = 0,
    min_len: int = 1,
    *,
    ticker: str = "",
    dates=None,
    warmup=None,
) -> list[Window]:
    """Segment a strength series into windows.

    A window opens on a bar with ``s > thr_high`` and is extended by every
    bar with ``s > thr_low``. It closes once ``gap + 1`` consecutive bars sit
    at or below ``thr_low`` (NaN counts as below), or at the end of the
    series. Trailing sub-threshold bars are trimmed, so every window ends on
    a bar above ``thr_low``; bridged interior dips stay inside. Windows
    shorter than ``min_len`` bars are dropped.
    """
    _check_params(thr_high, thr_low, gap, min_len)
    s = np.asarray(s, dtype=float)
    spans = []
    start = last = -1
    run = 0
    for t, v in enumerate(s):
        if start < 0:
            if v > thr_high:
                start = last = t
                run = 0
        elif v > thr_low:
            last = t
            run = 0
        else:
            run += 1
            if run > gap:
                spans.append((start, last))
                start = -1
    if start >= 0:
        spans.append((start, last))
    return [
        _make_window(ticker, a, b, dates, warmup) for a, b in spans if b - a + 1 >= min_len
    ]


def merge_windows(windows: Sequence[Window], gap: int) -> list[Window]:
    """Merge consecutive same-ticker windows separated by at most ``gap`` bars.

    Input windows must be disjoint; output is grouped by ticker (input order
    of first appearance) and sorted by start within a ticker. Idempotent.
    """
    if gap < 0:
        raise ConfigError(f"merge gap must be >= 0, got {gap}")
    by_ticker: dict[str, list[Window]] = {}
    for w in windows:
        by_ticker.setdefault(w.ticker, []).append(w)
    out: list[Window] = []
    for ticker, ws in by_ticker.items():
        ws = sorted(ws, key=lambda w: w.start_idx)
        merged: list[Window] = []
        for w in ws:
            if w.start_idx > w.end_idx:
                raise StructuralError(f"{ticker}: window [{w.start_idx}, {w.end_idx}] is inverted")
            if merged and w.start_idx <= merged[-1].end_idx:
                prev = merged[-1]
                raise StructuralError(
                    f"{ticker}: windows [{prev.start_idx}, {prev.end_idx}] and [{w.start_idx}, {w.end_idx}] overlap"
                )
            if merged and w.start_idx - merged[-1].end_idx - 1 <= gap:
                prev = merged[-1]
                merged[-1] = replace(
                    prev,
                    end_idx=w.end_idx,
                    end_ts=w.end_ts,
                    contains_warmup=prev.contains_warmup or w.contains_warmup,
                    window_id=None,
                )
            else:
                merged.append(w)
        out.extend(merged)
    return out


def filter_min_length(windows: Iterable[Window], min_len: int) -> list[Window]:
    return [w for w in windows if w.n_bars >= min_len]


def detect_ticker_windows(dev: pd.DataFrame, cfg, ticker: str = "") -> list[Window]:
    """Hysteresis, gap merge, then minimum-length filter for one ticker."""
    merge_gap = cfg.gap_tolerance if cfg.merge_gap is None else cfg.merge_gap
    dates = dev["date"].to_numpy("datetime64[D]")
    raw = hysteresis_segment(
        dev["s"].to_numpy(float),
        cfg.thr_high,
        cfg.thr_low,
        cfg.gap_tolerance,
        1,
        ticker=ticker,
        dates=dates,
        warmup=dev["warmup"].to_numpy(bool),
    )
    return filter_min_length(merge_windows(raw, merge_gap), cfg.min_window_len)


def assign_window_ids(windows: Iterable[Window], first_id: int = 1) -> list[Window]:
    """Number windows by ticker (lexical), then start index."""
    ordered = sorted(windows, key=lambda w: (w.ticker, w.start_idx))
    return [replace(w, window_id=first_id + i) for i, w in enumerate(ordered)]


def detect_windows(deviations: dict[str, pd.DataFrame], cfg) -> list[Window]:
    found = []
    for ticker in sorted(deviations):
        found.extend(detect_ticker_windows(deviations[ticker], cfg, ticker))
    return assign_window_ids(found)


def windows_overlap(a: Window, b: Window) -> bool:
    return a.ticker == b.ticker and a.start_idx <= b.end_idx and b.start_idx <= a.end_idx


def jaccard(a: range, b: range) -> float:
    """Jaccard index of two bar-index ranges."""
    sa, sb = set(a), set(b)
    union = len(sa | sb)
    return math.nan if union == 0 else len(sa & sb) / union
