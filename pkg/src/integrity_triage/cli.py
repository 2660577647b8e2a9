"""Command line entry point.

Verbs mirror the stage layout so each step can be rerun from the files the
previous one wrote::

    integrity-triage synth   --out data/
    integrity-triage panel   --ohlcv-path data/ohlcv.csv --attention-dir data/attention --out panel.csv
    integrity-triage detect  --panel panel.csv --out-dir stage3/
    integrity-triage score   --deviations stage3/deviations.csv --windows stage3/windows.csv --out ranked.csv
    integrity-triage report  --panel panel.csv --deviations stage3/deviations.csv --windows stage3/windows.csv --out-dir reports/
    integrity-triage run-all --ohlcv-path data/ohlcv.csv --attention-dir data/attention --thr-high 3.5

Exit codes: 0 success, 3 partial data, 1 failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict, load_config
from .errors import TriageError

log = logging.getLogger("integrity_triage")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3

# scalar config keys exposed one-for-one as --kebab-case flags
_SCALAR_TYPES = {"int": int, "float": float, "str": str, "int | None": int, "float | None": float, "str | None": str}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config.json (missing keys take defaults)")
    g = p.add_argument_group("config overrides")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.type in _SCALAR_TYPES:
            g.add_argument(flag, dest=f.name, type=_SCALAR_TYPES[f.type], default=None, metavar=f.name.upper())
        elif f.name in ("tickers", "attention_sources"):
            g.add_argument(flag, dest=f.name, default=None, help="comma-separated list")


def config_from_args(args) -> RunConfig:
    base = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    d = base.to_dict()
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        if f.name in ("tickers", "attention_sources"):
            v = [x.strip() for x in v.split(",") if x.strip()]
            if f.name == "attention_sources":
                d["source_weights"] = {s: 1.0 / len(v) for s in v} if v else {}
        d[f.name] = v
    return config_from_dict(d)


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------


def cmd_fetch(args) -> int:
    from .fetch import fetch_many
    from .io import write_ohlcv

    cfg = config_from_args(args)
    if not (cfg.tickers and cfg.start_date and cfg.end_date):
        log.error("fetch needs --tickers, --start-date and --end-date")
        return EXIT_USAGE
    bars = fetch_many(cfg.tickers, cfg.start_date, cfg.end_date, cfg.fetch)
    write_ohlcv(args.out, bars)
    print(args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import EpisodeSpec, inject_all, place_isolated_episodes, synthetic_market, write_market

    cfg = config_from_args(args)
    covered = args.covered_sources.split(",") if args.covered_sources else None
    market = synthetic_market(
        args.n_tickers,
        args.n_bars,
        args.seed,
        sources=cfg.attention_sources,
        covered_sources=covered,
        stale_fraction=args.stale_fraction,
    )
    specs = []
    if args.episodes > 0:
        rng = np.random.default_rng(args.seed)
        warm = cfg.baseline_window + cfg.vol_lookback
        for i, t in enumerate(market.tickers):
            for start in place_isolated_episodes(args.n_bars, args.episodes, args.episode_len, warm, warm + 5, rng):
                z = args.episode_z
                specs.append(EpisodeSpec(t, start, args.episode_len, z, z, z, seed=args.seed * 1000 + len(specs)))
    market = inject_all(market, specs, cfg)
    paths = write_market(market, args.out)
    for k, v in paths.items():
        print(f"{k}\t{v}")
    return EXIT_OK


def cmd_panel(args) -> int:
    from .io import load_attention, read_ohlcv, write_panel
    from .pipeline import select_bars, stage_panel

    cfg = config_from_args(args)
    if not cfg.ohlcv_path:
        log.error("panel needs --ohlcv-path")
        return EXIT_USAGE
    bars, missing = select_bars(read_ohlcv(cfg.ohlcv_path), cfg)
    attention = load_attention(cfg.attention_dir, bars, cfg.attention_sources, cfg.resample_modes)
    panel = stage_panel(bars, attention, cfg)
    write_panel(args.out, panel, cfg.attention_sources)
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_detect(args) -> int:
    from .io import read_panel, write_deviations, write_windows
    from .pipeline import stage_deviations, stage_detect

    cfg = config_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dev = stage_deviations(read_panel(args.panel), cfg)
    windows = stage_detect(dev, cfg)
    write_deviations(out / "deviations.csv", dev, cfg.attention_sources)
    write_windows(out / "windows.csv", windows)
    print(f"{len(windows)} windows")
    return EXIT_OK


def cmd_score(args) -> int:
    from .io import read_deviations, read_windows, write_csv
    from .pipeline import stage_score
    from .reports import RANKED_HEADER, ranked_rows

    cfg = config_from_args(args)
    dev = read_deviations(args.deviations)
    scored = stage_score(read_windows(args.windows, dev), dev, cfg)
    write_csv(args.out, RANKED_HEADER, ranked_rows(scored))
    return EXIT_OK


def cmd_report(args) -> int:
    from .io import read_deviations, read_panel, read_windows
    from .pipeline import stage_score
    from .reports import emit_reports

    cfg = config_from_args(args)
    dev = read_deviations(args.deviations)
    windows = read_windows(args.windows, dev)
    scored = stage_score(windows, dev, cfg)
    emit_reports(scored, windows, read_panel(args.panel), dev, cfg, args.out_dir)
    print(args.out_dir)
    return EXIT_OK


def cmd_run_all(args) -> int:
    from .pipeline import PARTIAL, run_all

    result = run_all(config_from_args(args))
    print(result.run_dir)
    for w in result.warnings:
        log.warning("%s", w)
    return EXIT_PARTIAL if result.status == PARTIAL else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="integrity-triage", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("fetch", help="download daily bars into an OHLCV CSV")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("synth", help="write a seeded synthetic market")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-tickers", type=int, default=24)
    p.add_argument("--n-bars", type=int, default=248)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--episodes", type=int, default=1, help="injected episodes per ticker")
    p.add_argument("--episode-len", type=int, default=4)
    p.add_argument("--episode-z", type=float, default=6.0)
    p.add_argument("--covered-sources", default=None)
    p.add_argument("--stale-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("panel", help="build the aligned panel CSV")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_panel)

    p = sub.add_parser("detect", help="z-scores, strength and windows from a panel CSV")
    _add_config_flags(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("score", help="score persisted windows")
    _add_config_flags(p)
    p.add_argument("--deviations", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="write every report artifact")
    _add_config_flags(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--deviations", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-all", help="every stage end to end")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TriageError as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except OSError as exc:
        log.error("%s: %s", getattr(exc, "filename", ""), exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
