from __future__ import annotations

import csv
import json

import numpy as np
import pandas as pd
import pytest

from integrity_triage.cli import EXIT_FAIL, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main
from integrity_triage.config import RunConfig
from integrity_triage.errors import StageError
from integrity_triage.pipeline import PARTIAL, SUCCESS, run_all, select_bars, stage_panel
from integrity_triage.reports import ATTRIBUTION_HEADER, RANKED_HEADER
from integrity_triage.synthetic import (
    EpisodeSpec,
    ProxySpec,
    SyntheticMarket,
    business_grid,
    generate_proxy,
    inject_all,
    write_market,
)


@pytest.fixture(scope="module")
def market_dir(tmp_path_factory, small_market):
    d = tmp_path_factory.mktemp("market")
    write_market(small_market, d)
    return d


def _cfg(market_dir, out, **kw):
    return RunConfig(ohlcv_path=str(market_dir / "ohlcv.csv"), attention_dir=str(market_dir / "attention"), output_dir=str(out), **kw)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def run(market_dir, tmp_path_factory):
    return run_all(_cfg(market_dir, tmp_path_factory.mktemp("runs")))


def test_run_writes_every_artifact(run):
    d = run.run_dir
    assert run.status == SUCCESS and d.name == "run-" + run.manifest["manifest_hash"][:16]
    for name in (
        "config.json",
        "panel.csv",
        "deviations.csv",
        "windows.csv",
        "windows_filtered.csv",
        "ranked_windows.csv",
        "ranked_windows_filtered.csv",
        "factor_attribution.csv",
        "factor_stats.csv",
        "factor_attribution.md",
        "ticker_summary.csv",
        "evidence/index.json",
        "manifest.json",
    ):
        assert (d / name).is_file(), name
    m = json.loads((d / "manifest.json").read_text())
    assert m["counts"]["windows"] == len(run.windows) == len(_read(d / "windows.csv")) - 1
    assert set(m["artifacts"]) == set(_tree(d)) - {"manifest.json"}
    assert len(json.loads((d / "evidence/index.json").read_text())) == len(run.scored)


def test_ranked_csv_sort_contract(run):
    rows = _read(run.run_dir / "ranked_windows.csv")
    assert rows[0] == RANKED_HEADER
    keys = [(-float(r[4]), int(r[0])) for r in rows[1:]]
    assert keys == sorted(keys)
    assert float(rows[1][5]) == 1.0


def test_markdown_attribution_header(run):
    md = (run.run_dir / "factor_attribution.md").read_text()
    assert "| " + " | ".join(ATTRIBUTION_HEADER) + " |" in md
    assert _read(run.run_dir / "factor_attribution.csv")[0] == ATTRIBUTION_HEADER


def test_evidence_packet_matches_scores(run):
    sw = max(run.scored, key=lambda s: s.M)
    ev = json.loads((run.run_dir / f"evidence/window_{sw.window_id:05d}.json").read_text())
    assert ev["window_id"] == sw.window_id and ev["ticker"] == sw.ticker
    assert len(ev["bars"]) == sw.window.n_bars


def test_rerun_is_byte_identical(run, market_dir, tmp_path):
    again = run_all(_cfg(market_dir, tmp_path))
    assert again.manifest["manifest_hash"] == run.manifest["manifest_hash"]
    assert _tree(again.run_dir) == _tree(run.run_dir)


def test_config_change_moves_run_dir(run, market_dir, tmp_path):
    other = run_all(_cfg(market_dir, tmp_path, thr_high=3.5))
    assert other.run_dir.name != run.run_dir.name


def test_empty_ticker_list(market_dir, tmp_path):
    res = run_all(_cfg(market_dir, tmp_path, tickers=[]))
    assert res.status == SUCCESS and res.windows == []
    assert _read(res.run_dir / "ranked_windows.csv") == [RANKED_HEADER]
    assert _read(res.run_dir / "windows.csv") == [["window_id", "ticker", "start_date", "end_date", "n_bars", "contains_warmup"]]
    assert json.loads((res.run_dir / "evidence/index.json").read_text()) == []


def test_missing_ticker_is_partial(market_dir, tmp_path):
    res = run_all(_cfg(market_dir, tmp_path, tickers=["SYN00", "NOPE"]))
    assert res.status == PARTIAL
    assert any("NOPE" in w for w in res.manifest["warnings"])


def test_select_bars_date_range(small_market):
    cfg = RunConfig(start_date="2024-03-01", end_date="2024-03-29")
    bars, missing = select_bars(small_market.bars, cfg)
    assert missing == []
    for f in bars.values():
        d = f["date"].to_numpy("datetime64[D]")
        assert d[0] >= np.datetime64("2024-03-01") and d[-1] <= np.datetime64("2024-03-29")


def test_stage_error_names_stage_and_ticker(small_market, tmp_path):
    bars = dict(small_market.bars)
    bars["SYN01"] = bars["SYN01"].iloc[1:].reset_index(drop=True)  # attention grid no longer matches
    with pytest.raises(StageError, match="stage panel, ticker SYN01"):
        stage_panel(bars, small_market.attention, RunConfig())
    with pytest.raises(StageError, match="stage ingest"):
        run_all(RunConfig(ohlcv_path=str(tmp_path / "absent.csv")))


def _quiet_market(n=120):
    """One ticker whose strength stays near 1 outside an injected episode."""
    cfg = RunConfig()
    grid = business_grid(n)
    r = np.where(np.arange(n) % 2 == 0, 0.01, -0.01)
    r[0] = 0
    close = 50 * np.exp(np.cumsum(r))
    bars = pd.DataFrame({"date": grid, "open": close, "high": close * 1.001, "low": close * 0.999, "close": close, "volume": 1e5})
    att = {
        s: generate_proxy(ProxySpec(s, base_level=10 + i, noise_scale=0, spike_rate=0), n, grid=grid, ticker="Q")
        for i, s in enumerate(cfg.attention_sources)
    }
    return inject_all(SyntheticMarket({"Q": bars}, {"Q": att}), [EpisodeSpec("Q", 70, 4, 6, 6, 6, seed=1)], cfg)


def test_single_episode_is_the_only_window(tmp_path):
    m = _quiet_market()
    write_market(m, tmp_path / "data")
    res = run_all(_cfg(tmp_path / "data", tmp_path / "runs"))
    kept = [w for w in res.windows if not w.contains_warmup]
    (lab,) = m.labels
    assert len(kept) == 1
    (w,) = kept
    assert w.start_idx == lab.start_idx and w.end_idx >= lab.end_idx
    assert _read(res.run_dir / "windows_filtered.csv")[1][2] == str(lab.start_date)


# --- CLI -------------------------------------------------------------------


def test_cli_staged_run_matches_run_all(run, market_dir, tmp_path):
    ohlcv, att = str(market_dir / "ohlcv.csv"), str(market_dir / "attention")
    assert main(["panel", "--ohlcv-path", ohlcv, "--attention-dir", att, "--out", str(tmp_path / "panel.csv")]) == EXIT_OK
    assert (tmp_path / "panel.csv").read_bytes() == (run.run_dir / "panel.csv").read_bytes()
    assert main(["detect", "--panel", str(tmp_path / "panel.csv"), "--out-dir", str(tmp_path / "s3")]) == EXIT_OK
    for f in ("deviations.csv", "windows.csv"):
        assert (tmp_path / "s3" / f).read_bytes() == (run.run_dir / f).read_bytes()


def test_stage_four_rerun_from_persisted_files(run, tmp_path):
    d = run.run_dir
    args = ["--deviations", str(d / "deviations.csv"), "--windows", str(d / "windows.csv")]
    assert main(["score", *args, "--out", str(tmp_path / "ranked.csv")]) == EXIT_OK
    assert (tmp_path / "ranked.csv").read_bytes() == (d / "ranked_windows.csv").read_bytes()
    assert main(["report", "--panel", str(d / "panel.csv"), *args, "--out-dir", str(tmp_path / "rep")]) == EXIT_OK
    rep = _tree(tmp_path / "rep")
    full = _tree(d)
    assert rep and all(full[k] == v for k, v in rep.items())


def test_cli_flags_override_config(tmp_path, market_dir):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"thr_high": 4.0}))
    out = tmp_path / "runs"
    rc = main(["run-all", "--config", str(cfg_path), "--thr-high", "3.5", "--ohlcv-path", str(market_dir / "ohlcv.csv"),
               "--attention-dir", str(market_dir / "attention"), "--output-dir", str(out), "--tickers", "SYN00"])
    assert rc == EXIT_OK
    (run_dir,) = out.iterdir()
    saved = json.loads((run_dir / "config.json").read_text())
    assert saved["thr_high"] == 3.5 and saved["tickers"] == ["SYN00"]


def test_cli_exit_codes(tmp_path, market_dir):
    ohlcv = str(market_dir / "ohlcv.csv")
    assert main(["run-all", "--ohlcv-path", ohlcv, "--output-dir", str(tmp_path), "--tickers", "SYN00,NOPE"]) == EXIT_PARTIAL
    assert main(["run-all", "--ohlcv-path", str(tmp_path / "none.csv"), "--output-dir", str(tmp_path)]) == EXIT_FAIL
    assert main(["run-all", "--thr-high", "1", "--thr-low", "2"]) == EXIT_FAIL
    assert main(["fetch", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_USAGE


def test_cli_synth_writes_market(tmp_path):
    rc = main(["synth", "--out", str(tmp_path), "--n-tickers", "2", "--n-bars", "100", "--episodes", "1"])
    assert rc == EXIT_OK
    assert (tmp_path / "ohlcv.csv").is_file() and (tmp_path / "labels.csv").is_file()
    assert len(_read(tmp_path / "labels.csv")) == 3
