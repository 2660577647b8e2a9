"""Stage orchestration: ingest, panel, deviations, windows, scores, reports.

Every run lands in ``<output_dir>/run-<hash>`` where the hash covers the
result-relevant config, the engine version and the sha256 of each input
file, so identical inputs always map to the same directory and bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from . import __version__
from .baseline import deviation_frame
from .config import RunConfig
from .errors import FetchError, InputError, StageError, TriageError
from .io import (
    attention_path,
    coverage_path,
    load_attention,
    read_ohlcv,
    write_deviations,
    write_json,
    write_panel,
    atomic_write_text,
)
from .panel import build_ticker_panel, to_day
from .reports import emit_reports
from .scoring import ScoredWindow, score_windows
from .segmentation import Window, assign_window_ids, detect_ticker_windows

log = logging.getLogger(__name__)

SUCCESS, PARTIAL, FAILURE = "success", "partial", "failure"


@dataclass
class RunResult:
    status: str
    run_dir: Path | None
    manifest: dict
    panel: dict[str, pd.DataFrame] = field(default_factory=dict)
    deviations: dict[str, pd.DataFrame] = field(default_factory=dict)
    windows: list[Window] = field(default_factory=list)
    scored: list[ScoredWindow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def input_digests(cfg: RunConfig) -> dict[str, str]:
    """sha256 of every input file the run reads, keyed by a stable label."""
    out = {}
    if cfg.ohlcv_path:
        p = Path(cfg.ohlcv_path)
        files = sorted(p.glob("*.csv")) if p.is_dir() else [p]
        for f in files:
            out[f"ohlcv/{f.name}"] = sha256_file(f)
    if cfg.attention_dir:
        for s in cfg.attention_sources:
            for f in (attention_path(cfg.attention_dir, s), coverage_path(cfg.attention_dir, s)):
                if f.exists():
                    out[f"attention/{f.name}"] = sha256_file(f)
    return out


def manifest_hash(cfg: RunConfig, digests: Mapping[str, str], bar_digest: str | None = None) -> str:
    blob = json.dumps(
        {"config": cfg.digest(), "inputs": dict(sorted(digests.items())), "engine": __version__, "fetched": bar_digest},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def _bars_digest(bars: Mapping[str, pd.DataFrame]) -> str:
    h = hashlib.sha256()
    for t in sorted(bars):
        h.update(t.encode())
        h.update(pd.util.hash_pandas_object(bars[t], index=False).to_numpy().tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Stage 0: ingest
# ---------------------------------------------------------------------------


def select_bars(bars: Mapping[str, pd.DataFrame], cfg: RunConfig) -> tuple[dict[str, pd.DataFrame], list[str]]:
    """Apply the ticker list and date range; returns (bars, missing tickers)."""
    wanted = sorted(bars) if cfg.tickers is None else sorted(set(cfg.tickers))
    missing = [t for t in wanted if t not in bars]
    lo = to_day(cfg.start_date) if cfg.start_date else None
    hi = to_day(cfg.end_date) if cfg.end_date else None
    out = {}
    for t in wanted:
        if t not in bars:
            continue
        f = bars[t]
        d = f["date"].to_numpy("datetime64[D]")
        keep = np.ones(d.size, dtype=bool)
        if lo is not None:
            keep &= d >= lo
        if hi is not None:
            keep &= d <= hi
        out[t] = f.loc[keep].reset_index(drop=True)
    return out, missing


def load_market_data(cfg: RunConfig, *, session=None, sleep=None) -> tuple[dict[str, pd.DataFrame], list[str]]:
    """Bars from ``ohlcv_path`` or, when unset, from the HTTP endpoint."""
    if cfg.ohlcv_path:
        try:
            raw = read_ohlcv(cfg.ohlcv_path)
        except (OSError, InputError) as exc:
            raise StageError("ingest", str(exc)) from exc
        return select_bars(raw, cfg)
    if not cfg.tickers:
        return {}, []
    if not (cfg.start_date and cfg.end_date):
        raise StageError("ingest", "fetching needs start_date and end_date")
    from .fetch import RateLimiter, fetch_ohlcv

    kwargs = {} if sleep is None else {"sleep": sleep}
    limiter = RateLimiter(cfg.fetch.requests_per_minute, **kwargs)
    bars, failed = {}, []
    for t in sorted(set(cfg.tickers)):
        try:
            bars[t] = fetch_ohlcv(t, cfg.start_date, cfg.end_date, cfg.fetch, session=session, limiter=limiter, **kwargs)
        except FetchError as exc:
            log.warning("%s", exc)
            failed.append(t)
    if failed and not bars:
        raise StageError("ingest", f"no ticker could be fetched ({', '.join(failed)})")
    selected, missing = select_bars(bars, cfg)
    return selected, sorted(set(missing) | set(failed))


# ---------------------------------------------------------------------------
# Stages 1-4
# ---------------------------------------------------------------------------


def stage_panel(bars, attention, cfg: RunConfig) -> dict[str, pd.DataFrame]:
    out = {}
    for t in sorted(bars):
        try:
            out[t] = build_ticker_panel(
                t,
                bars[t],
                attention.get(t, {}),
                sources=cfg.attention_sources,
                weights=cfg.source_weights,
                vol_lookback=cfg.vol_lookback,
                eps=cfg.eps,
                ewma_lambda=cfg.ewma_lambda,
                normalization=cfg.normalization,
                vol_include_current=cfg.vol_include_current,
            )
        except TriageError as exc:
            raise StageError("panel", str(exc), t) from exc
    return out


def stage_deviations(panel, cfg: RunConfig) -> dict[str, pd.DataFrame]:
    out = {}
    for t in sorted(panel):
        try:
            out[t] = deviation_frame(panel[t], cfg)
        except (TriageError, KeyError) as exc:
            raise StageError("baseline", str(exc), t) from exc
    return out


def stage_detect(deviations, cfg: RunConfig) -> list[Window]:
    found = []
    for t in sorted(deviations):
        try:
            found.extend(detect_ticker_windows(deviations[t], cfg, t))
        except TriageError as exc:
            raise StageError("detect", str(exc), t) from exc
    return assign_window_ids(found)


def stage_score(windows, deviations, cfg: RunConfig) -> list[ScoredWindow]:
    try:
        return score_windows(windows, deviations, cfg)
    except TriageError as exc:
        raise StageError("score", str(exc), getattr(exc, "ticker", None)) from exc


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------


def _data_range(bars: Mapping[str, pd.DataFrame]) -> dict[str, str | None]:
    dates = [f["date"].to_numpy("datetime64[D]") for f in bars.values() if len(f)]
    if not dates:
        return {"first": None, "last": None}
    return {"first": str(min(d[0] for d in dates)), "last": str(max(d[-1] for d in dates))}


def _artifact_digests(run_dir: Path) -> dict[str, str]:
    out = {}
    for f in sorted(run_dir.rglob("*")):
        if f.is_file() and f.name != "manifest.json":
            out[f.relative_to(run_dir).as_posix()] = sha256_file(f)
    return out


def run_all(cfg: RunConfig, *, session=None, sleep=None) -> RunResult:
    """Run every stage and write the artifact set; raises StageError on failure."""
    cfg.validate()
    bars, missing = load_market_data(cfg, session=session, sleep=sleep)
    warnings = [f"ticker {t} has no market data" for t in missing]

    try:
        attention = load_attention(cfg.attention_dir, bars, cfg.attention_sources, cfg.resample_modes)
    except TriageError as exc:
        raise StageError("attention", str(exc), getattr(exc, "ticker", None)) from exc
    if cfg.attention_dir:
        for s in cfg.attention_sources:
            if not attention_path(cfg.attention_dir, s).exists():
                warnings.append(f"attention source {s} has no input file")

    digests = input_digests(cfg)
    run_hash = manifest_hash(cfg, digests, None if cfg.ohlcv_path else _bars_digest(bars))
    run_dir = Path(cfg.output_dir) / f"run-{run_hash[:16]}"
    run_dir.mkdir(parents=True, exist_ok=True)

    panel = stage_panel(bars, attention, cfg)
    deviations = stage_deviations(panel, cfg)
    windows = stage_detect(deviations, cfg)
    scored = stage_score(windows, deviations, cfg)

    # the output location is left out so a run directory can be moved or compared byte for byte
    saved = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    atomic_write_text(run_dir / "config.json", json.dumps(saved, sort_keys=True, indent=2) + "\n")
    write_panel(run_dir / "panel.csv", panel, cfg.attention_sources)
    write_deviations(run_dir / "deviations.csv", deviations, cfg.attention_sources)
    emit_reports(scored, windows, panel, deviations, cfg, run_dir)

    status = PARTIAL if missing else SUCCESS
    manifest = {
        "manifest_hash": run_hash,
        "engine_version": __version__,
        "config_hash": cfg.digest(),
        "inputs": digests,
        "status": status,
        "data_range": _data_range(bars),
        "counts": {
            "tickers": len(bars),
            "bars": int(sum(len(f) for f in bars.values())),
            "windows": len(windows),
            "windows_after_warmup_filter": sum(1 for w in windows if not w.contains_warmup),
            "scored": len(scored),
        },
        "warnings": warnings,
        "artifacts": _artifact_digests(run_dir),
    }
    write_json(run_dir / "manifest.json", manifest)
    log.info("run %s: %s, %d windows", run_dir, status, len(windows))
    return RunResult(status, run_dir, manifest, panel, deviations, windows, scored, warnings)
