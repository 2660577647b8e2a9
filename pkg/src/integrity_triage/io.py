"""CSV/JSON readers and writers for every stage interface.

Report artifacts use 9 significant digits; stage hand-off files (panel and
deviation exports) use shortest round-trip ``repr`` so a stage re-run from
disk reproduces in-memory results exactly. Missing values are the literal
``NaN`` in both.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import InputError
from .panel import OHLCV_COLUMNS, AttentionObservation, AttentionSeries, as_grid, resample_source, to_day, validate_bars
from .segmentation import Window

OHLCV_HEADER = ["ticker", "date", "open", "high", "low", "close", "volume"]
ATTENTION_HEADER = ["ticker", "timestamp", "value"]
COVERAGE_HEADER = ["ticker", "start", "end"]
WINDOW_HEADER = ["window_id", "ticker", "start_date", "end_date", "n_bars", "contains_warmup"]
LABEL_HEADER = ["ticker", "start_date", "end_date", "return_z", "vol_z", "attention_z", "seed"]


def fmt_report(x) -> str:
    """Nine significant digits, ``NaN`` for missing."""
    if x is None:
        return "NaN"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return format(x, ".9g")


def fmt_exact(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    return repr(x)


def fmt_date(d) -> str:
    return str(to_day(d))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, csv_text(header, rows))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


# ---------------------------------------------------------------------------
# OHLCV
# ---------------------------------------------------------------------------


def read_ohlcv(path: str | Path) -> dict[str, pd.DataFrame]:
    """Read one OHLCV CSV file, or every ``*.csv`` in a directory.

    Returns one validated frame per ticker with columns
    ``date, open, high, low, close, volume`` sorted by date.
    """
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    frames = []
    for f in files:
        df = pd.read_csv(f, dtype={"ticker": str}, encoding="utf-8", float_precision="round_trip")
        missing = [c for c in OHLCV_HEADER if c not in df.columns]
        if missing:
            raise InputError(f"{f}: missing OHLCV columns {missing}")
        frames.append(df[OHLCV_HEADER])
    if not frames:
        return {}
    data = pd.concat(frames, ignore_index=True)
    data["date"] = pd.to_datetime(data["date"]).dt.normalize().to_numpy("datetime64[D]")
    out = {}
    for ticker, grp in data.groupby("ticker", sort=True):
        frame = grp[OHLCV_COLUMNS].sort_values("date", kind="stable").reset_index(drop=True)
        frame["date"] = frame["date"].to_numpy("datetime64[D]")
        for c in ("open", "high", "low", "close", "volume"):
            frame[c] = frame[c].astype(float)
        validate_bars(frame, str(ticker))
        out[str(ticker)] = frame
    return out


def ohlcv_rows(bars: Mapping[str, pd.DataFrame]):
    for ticker in sorted(bars):
        f = bars[ticker]
        for d, o, h, l, c, v in zip(f["date"], f["open"], f["high"], f["low"], f["close"], f["volume"]):
            yield [ticker, fmt_date(d), fmt_exact(o), fmt_exact(h), fmt_exact(l), fmt_exact(c), fmt_exact(v)]


def write_ohlcv(path, bars: Mapping[str, pd.DataFrame]) -> None:
    write_csv(path, OHLCV_HEADER, ohlcv_rows(bars))


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------


def attention_path(directory, source: str) -> Path:
    return Path(directory) / f"{source}.csv"


def coverage_path(directory, source: str) -> Path:
    return Path(directory) / f"{source}.coverage.csv"


def read_attention_raw(path) -> dict[str, list[AttentionObservation]]:
    """Observations per ticker from a ``ticker,timestamp,value`` file.

    An empty or ``NaN`` value marks an explicit coverage gap at that time.
    """
    path = Path(path)
    source = path.name[: -len(".csv")] if path.name.endswith(".csv") else path.stem
    df = pd.read_csv(path, dtype={"ticker": str, "timestamp": str}, keep_default_na=True, float_precision="round_trip")
    missing = [c for c in ATTENTION_HEADER if c not in df.columns]
    if missing:
        raise InputError(f"{path}: missing attention columns {missing}")
    out: dict[str, list[AttentionObservation]] = {}
    stamps = pd.to_datetime(df["timestamp"], format="ISO8601")
    if stamps.dt.tz is not None:
        stamps = stamps.dt.tz_localize(None)
    df = df.assign(_ts=stamps)
    for ticker, grp in df.groupby("ticker", sort=True):
        grp = grp.sort_values("_ts", kind="stable")
        obs = []
        for ts, v in zip(grp["_ts"], grp["value"]):
            if pd.isna(v):
                obs.append(AttentionObservation(source, ts, math.nan, "missing"))
            else:
                obs.append(AttentionObservation(source, ts, float(v)))
        out[str(ticker)] = obs
    return out


def read_coverage(path) -> dict[str, list[tuple[np.datetime64, np.datetime64]]] | None:
    """Coverage spans per ticker, or None when the file is absent (full coverage)."""
    path = Path(path)
    if not path.exists():
        return None
    df = pd.read_csv(path, dtype={"ticker": str, "start": str, "end": str})
    out: dict[str, list] = {}
    for t, s, e in zip(df["ticker"], df["start"], df["end"]):
        out.setdefault(str(t), []).append((to_day(s), to_day(e)))
    return out


def load_attention(
    directory,
    bars: Mapping[str, pd.DataFrame],
    sources: Sequence[str],
    modes: Mapping[str, str],
) -> dict[str, dict[str, AttentionSeries]]:
    """Resample every configured source file onto each ticker's bar grid.

    A missing source file means the source was never covered. A missing
    coverage file means full coverage; a coverage file without rows for a
    ticker means that ticker was never covered.
    """
    out: dict[str, dict[str, AttentionSeries]] = {t: {} for t in bars}
    if directory is None:
        return out
    for s in sources:
        p = attention_path(directory, s)
        if not p.exists():
            continue
        raw = read_attention_raw(p)
        cov = read_coverage(coverage_path(directory, s))
        for t, frame in bars.items():
            spans = None if cov is None else cov.get(t, [])
            series = resample_source(raw.get(t, []), frame["date"].to_numpy(), modes.get(s, "sum_aggregate"), spans, ticker=t)
            out[t][s] = AttentionSeries(source=s, ticker=t, dates=series.dates, values=series.values)
    return out


def write_attention_series(directory, source: str, series: Mapping[str, AttentionSeries], coverage=None) -> None:
    """Write grid-aligned series as raw observation rows (NaN slots omitted)."""
    rows = []
    for t in sorted(series):
        ser = series[t]
        for d, v in zip(ser.dates, ser.values):
            if not math.isnan(v):
                rows.append([t, fmt_date(d), fmt_exact(v)])
    write_csv(attention_path(directory, source), ATTENTION_HEADER, rows)
    if coverage is not None:
        crow = []
        for t in sorted(coverage):
            for a, b in coverage[t]:
                crow.append([t, fmt_date(a), fmt_date(b)])
        write_csv(coverage_path(directory, source), COVERAGE_HEADER, crow)


# ---------------------------------------------------------------------------
# Stage exports
# ---------------------------------------------------------------------------


def _frame_rows(frames: Mapping[str, pd.DataFrame], columns: Sequence[str], fmt) -> Iterable[list[str]]:
    for t in sorted(frames):
        f = frames[t]
        cols = [f[c].to_numpy() for c in columns]
        for i in range(len(f)):
            row = []
            for c, arr in zip(columns, cols):
                v = arr[i]
                if c == "ticker":
                    row.append(str(v))
                elif c == "date":
                    row.append(fmt_date(v))
                else:
                    row.append(fmt(v))
            yield row


def panel_columns(sources: Sequence[str]) -> list[str]:
    return ["ticker", "date", "r", "sigma", "range_proxy", "sigma_ewma", "A", *sources]


def write_panel(path, panel: Mapping[str, pd.DataFrame], sources: Sequence[str]) -> None:
    cols = panel_columns(sources)
    write_csv(path, cols, _frame_rows(panel, cols, fmt_exact))


def deviation_columns(sources: Sequence[str]) -> list[str]:
    return ["ticker", "date", "z_r", "z_sigma", "z_A", "s", "warmup", *(f"z_{s}" for s in sources)]


def write_deviations(path, deviations: Mapping[str, pd.DataFrame], sources: Sequence[str]) -> None:
    cols = deviation_columns(sources)
    write_csv(path, cols, _frame_rows(deviations, cols, fmt_exact))


def _read_frames(path, bool_cols=()) -> dict[str, pd.DataFrame]:
    df = pd.read_csv(path, dtype={"ticker": str}, keep_default_na=False, na_values=["NaN"], float_precision="round_trip")
    df["date"] = pd.to_datetime(df["date"]).to_numpy("datetime64[D]")
    for c in bool_cols:
        if c in df:
            df[c] = df[c].map({"true": True, "false": False, True: True, False: False}).astype(bool)
    out = {}
    for t, grp in df.groupby("ticker", sort=True):
        g = grp.reset_index(drop=True)
        g["date"] = g["date"].to_numpy("datetime64[D]")
        out[str(t)] = g
    return out


def read_panel(path) -> dict[str, pd.DataFrame]:
    return _read_frames(path)


def read_deviations(path) -> dict[str, pd.DataFrame]:
    return _read_frames(path, bool_cols=("warmup",))


def window_rows(windows: Sequence[Window]):
    for w in windows:
        yield [
            str(w.window_id),
            w.ticker,
            fmt_date(w.start_ts),
            fmt_date(w.end_ts),
            str(w.n_bars),
            "true" if w.contains_warmup else "false",
        ]


def write_windows(path, windows: Sequence[Window]) -> None:
    write_csv(path, WINDOW_HEADER, window_rows(windows))


def read_windows(path, deviations: Mapping[str, pd.DataFrame]) -> list[Window]:
    """Rebuild windows, recovering bar indices from each ticker's date grid."""
    df = pd.read_csv(path, dtype={"ticker": str, "start_date": str, "end_date": str})
    out = []
    for row in df.itertuples(index=False):
        t = str(row.ticker)
        if t not in deviations:
            raise InputError(f"window {row.window_id} refers to ticker {t} absent from the deviations file")
        grid = deviations[t]["date"].to_numpy("datetime64[D]")
        a, b = to_day(row.start_date), to_day(row.end_date)
        i = int(np.searchsorted(grid, a))
        j = int(np.searchsorted(grid, b))
        if i >= grid.size or grid[i] != a or j >= grid.size or grid[j] != b:
            raise InputError(f"window {row.window_id}: dates {a}..{b} not on the {t} grid")
        warm = str(row.contains_warmup).strip().lower() == "true"
        out.append(Window(t, i, j, grid[i], grid[j], warm, int(row.window_id)))
    return out


def write_labels(path, labels) -> None:
    rows = [
        [
            lab.ticker,
            fmt_date(lab.start_date),
            fmt_date(lab.end_date),
            fmt_report(lab.return_z),
            fmt_report(lab.vol_z),
            fmt_report(lab.attention_z),
            str(lab.seed),
        ]
        for lab in labels
    ]
    write_csv(path, LABEL_HEADER, rows)


def read_labels(path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"ticker": str})
