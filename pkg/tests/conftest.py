from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from integrity_triage.config import RunConfig  # noqa: E402
from integrity_triage.synthetic import EpisodeSpec, inject_all, synthetic_market  # noqa: E402


def make_bars(closes, start="2024-01-02", spread=0.01) -> pd.DataFrame:
    """Business-day OHLCV frame whose highs/lows bracket open and close."""
    closes = np.asarray(closes, dtype=float)
    opens = np.r_[closes[0], closes[:-1]]
    top = np.maximum(opens, closes)
    bot = np.minimum(opens, closes)
    return pd.DataFrame(
        {
            "date": pd.bdate_range(start, periods=len(closes)).to_numpy("datetime64[D]"),
            "open": opens,
            "high": top * (1 + spread),
            "low": bot * (1 - spread),
            "close": closes,
            "volume": np.full(len(closes), 1000.0),
        }
    )


@pytest.fixture
def cfg() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def small_market():
    """Four tickers with one strong injected episode each."""
    c = RunConfig()
    m = synthetic_market(4, 160, seed=99)
    specs = [EpisodeSpec(t, 70, 4, 6.0, 6.0, 6.0, seed=i) for i, t in enumerate(m.tickers)]
    return inject_all(m, specs, c)
