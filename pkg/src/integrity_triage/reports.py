"""Report artifacts: ranked windows, factor attribution, ticker summary and
per-window evidence packets."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .io import fmt_date, fmt_report, write_csv, write_json, write_windows, atomic_write_text
from .scoring import FACTOR_LABELS, FACTOR_NAMES, ScoredWindow, contribution_stats, rank_order, ticker_summary, window_slice
from .segmentation import Window

RANKED_HEADER = (
    ["window_id", "ticker", "start_date", "end_date", "M", "rank_pct"]
    + list(FACTOR_NAMES)
    + [f"contrib{k}" for k in range(1, 7)]
    + ["flags"]
)
ATTRIBUTION_HEADER = ["signal", "mean", "median", "abs_mean_share", "nonzero_pct"]
FACTOR_STATS_HEADER = ["factor", "label", "mean", "median", "max", "std", "nonzero_pct"]


def _round9(x):
    """JSON-friendly float at nine significant digits (None for NaN)."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(format(x, ".9g"))


def ranked_rows(scored: Sequence[ScoredWindow]):
    for sw in rank_order(scored):
        w = sw.window
        yield (
            [str(w.window_id), w.ticker, fmt_date(w.start_ts), fmt_date(w.end_ts), fmt_report(sw.M), fmt_report(sw.rank_pct)]
            + [fmt_report(v) for v in sw.phi.as_array()]
            + [fmt_report(v) for v in sw.contributions]
            + [";".join(sw.flags)]
        )


def is_reportable(sw: ScoredWindow, exclude_warmup: bool) -> bool:
    """Filter used for the ``*_filtered`` artifacts."""
    if exclude_warmup and "warmup" in sw.flags:
        return False
    return "z_cap" not in sw.flags


def attribution_markdown(attribution: pd.DataFrame, factor_stats: pd.DataFrame, n_windows: int, scale: str) -> str:
    lines = [
        "# Factor attribution",
        "",
        f"Windows: {n_windows}. Factor scaling: `{scale}`.",
        "",
        "## Contribution statistics",
        "",
        "| signal | mean | median | abs_mean_share | nonzero_pct |",
        "|---|---:|---:|---:|---:|",
    ]
    for row in attribution.itertuples(index=False):
        lines.append(
            f"| {row.signal} | {row.mean:.3f} | {row.median:.3f} | {row.abs_mean_share:.1f}% | {row.nonzero_pct:.1f}% |"
        )
    lines += [
        "",
        "## Raw factor statistics",
        "",
        "| factor | mean | median | max | std | nonzero |",
        "|---|---:|---:|---:|---:|---:|",
    ]
    for row in factor_stats.itertuples(index=False):
        lines.append(
            f"| {row.factor} ({row.label}) | {row.mean:.2f} | {row.median:.2f} | {row.max:.2f} | {row.std:.2f} | {row.nonzero_pct:.1f}% |"
        )
    return "\n".join(lines) + "\n"


def evidence_packet(sw: ScoredWindow, dev: pd.DataFrame, sources: Sequence[str]) -> dict:
    w = sw.window
    rows = window_slice(dev, w)
    bars = []
    for i, (_, row) in enumerate(rows.iterrows()):
        bars.append(
            {
                "bar_idx": w.start_idx + i,
                "date": fmt_date(row["date"]),
                "z_r": _round9(row["z_r"]),
                "z_sigma": _round9(row["z_sigma"]),
                "z_A": _round9(row["z_A"]),
                "s": _round9(row["s"]),
                "z_source": {s: _round9(row.get(f"z_{s}", math.nan)) for s in sources},
            }
        )
    return {
        "window_id": w.window_id,
        "ticker": w.ticker,
        "start_date": fmt_date(w.start_ts),
        "end_date": fmt_date(w.end_ts),
        "start_idx": w.start_idx,
        "end_idx": w.end_idx,
        "n_bars": w.n_bars,
        "contains_warmup": w.contains_warmup,
        "M": _round9(sw.M),
        "provisional_M": _round9(sw.provisional_M),
        "rank_pct": _round9(sw.rank_pct),
        "phi": {k: _round9(v) for k, v in zip(FACTOR_NAMES, sw.phi.as_array())},
        "phi_scaled": {k: _round9(v) for k, v in zip(FACTOR_NAMES, sw.scaled)},
        "contributions": {
            k: {"label": FACTOR_LABELS[k], "value": _round9(v)} for k, v in zip(FACTOR_NAMES, sw.contributions)
        },
        "flags": list(sw.flags),
        "bars": bars,
    }


def table_rows(frame: pd.DataFrame, columns: Sequence[str]):
    for rec in frame[list(columns)].itertuples(index=False):
        yield [v if isinstance(v, str) else fmt_report(v) for v in rec]


def emit_reports(
    scored: Sequence[ScoredWindow],
    windows: Sequence[Window],
    panel: Mapping[str, pd.DataFrame],
    deviations: Mapping[str, pd.DataFrame],
    cfg,
    out_dir,
) -> dict[str, Path]:
    """Write every report artifact under ``out_dir``; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    def p(name):
        paths[name] = out / name
        return paths[name]

    write_windows(p("windows.csv"), windows)
    keep = [w for w in windows if not (cfg.exclude_warmup and w.contains_warmup)]
    write_windows(p("windows_filtered.csv"), keep)

    write_csv(p("ranked_windows.csv"), RANKED_HEADER, ranked_rows(scored))
    filtered = [sw for sw in scored if is_reportable(sw, cfg.exclude_warmup)]
    write_csv(p("ranked_windows_filtered.csv"), RANKED_HEADER, ranked_rows(filtered))

    attribution, factor_stats = contribution_stats(scored)
    write_csv(p("factor_attribution.csv"), ATTRIBUTION_HEADER, table_rows(attribution, ATTRIBUTION_HEADER))
    write_csv(p("factor_stats.csv"), FACTOR_STATS_HEADER, table_rows(factor_stats, FACTOR_STATS_HEADER))
    atomic_write_text(p("factor_attribution.md"), attribution_markdown(attribution, factor_stats, len(scored), cfg.scale))

    summary = ticker_summary(scored, panel)
    write_csv(p("ticker_summary.csv"), list(summary.columns), table_rows(summary, summary.columns))

    ev_dir = out / "evidence"
    ev_dir.mkdir(exist_ok=True)
    index = []
    for sw in rank_order(scored):
        name = f"window_{sw.window_id:05d}.json"
        write_json(ev_dir / name, evidence_packet(sw, deviations[sw.ticker], cfg.attention_sources))
        index.append(name)
    write_json(ev_dir / "index.json", index)
    paths["evidence"] = ev_dir
    return paths
