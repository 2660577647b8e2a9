from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from integrity_triage.baseline import (
    channel_zscore,
    composite_strength,
    deviation_frame,
    rolling_baseline,
    warmup_mask,
    zscore,
)
from integrity_triage.errors import ConfigError
from oracles import oracle_baseline

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_constant_series_has_eps_floor():
    st_ = rolling_baseline(np.full(30, 4.2), 20, 1e-12)
    assert not st_.defined[:20].any() and st_.defined[20:].all()
    assert np.all(st_.mu[20:] == 4.2)
    assert np.allclose(st_.sigma_hat[20:], 1e-6, rtol=1e-12)


def test_hand_sample_variance_example():
    st_ = rolling_baseline([1.0, 2.0, 3.0, 4.0], 3, 1e-12)
    assert st_.mu[3] == 2.0
    assert st_.sigma_hat[3] == math.sqrt(1 + 1e-12)


def test_window_too_short_rejected():
    with pytest.raises(ConfigError):
        rolling_baseline([1.0, 2.0, 3.0], 1)


def test_nan_in_trailing_window_marks_undefined():
    x = np.arange(12, dtype=float)
    x[4] = np.nan
    st_ = rolling_baseline(x, 3)
    # slots whose window [t-3, t) contains index 4 are 5, 6, 7
    assert list(np.flatnonzero(st_.defined)) == [3, 4, 8, 9, 10, 11]
    z = zscore(x, st_)
    assert math.isnan(z[4])  # baseline fine, input NaN


def test_zscore_definitional_values():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    st_ = rolling_baseline(x, 10)
    t = 25
    x2 = x.copy()
    x2[t] = st_.mu[t]
    assert zscore(x2, st_)[t] == 0.0
    x2[t] = st_.mu[t] + 3 * (st_.sigma_hat[t] + 1e-12)
    assert zscore(x2, st_)[t] == pytest.approx(3.0, abs=1e-12)


def test_zscore_matches_two_pass_oracle():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(5, 120))
        B = int(rng.integers(2, 25))
        x = rng.normal(rng.uniform(-5, 5), rng.uniform(0.01, 10), n)
        x[rng.random(n) < 0.03] = np.nan
        st_ = rolling_baseline(x, B)
        z = zscore(x, st_)
        mu, sd, zo = oracle_baseline(list(x), B, 1e-12)
        for t in range(n):
            if mu[t] is None:
                assert not st_.defined[t]
                continue
            assert abs(st_.mu[t] - mu[t]) <= 1e-10
            assert abs(st_.sigma_hat[t] - sd[t]) <= 1e-10
            if zo[t] is None:
                assert math.isnan(z[t])
            else:
                assert abs(z[t] - zo[t]) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=25, max_size=60), st.floats(-1e3, 1e3))
def test_shift_invariance(xs, c):
    x = np.array(xs)
    assume(np.std(x) > 1e-3)
    a = channel_zscore(x, 20)
    b = channel_zscore(x + c, 20)
    ok = ~np.isnan(a)
    assert np.allclose(a[ok], b[ok], rtol=0, atol=1e-10 * (1 + np.abs(a[ok]).max()))


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=25, max_size=60), st.floats(0.1, 100))
def test_near_scale_invariance(xs, c):
    x = np.array(xs)
    st_ = rolling_baseline(x, 20)
    assume(np.nanmin(st_.sigma_hat) > 1e-2)
    a = channel_zscore(x, 20)
    b = channel_zscore(c * x, 20)
    ok = ~np.isnan(a)
    assert np.allclose(a[ok], b[ok], rtol=0, atol=1e-6)


def test_composite_strength_example():
    s = composite_strength([-2.0], [1.0], [0.5])
    assert s[0] == 3.5


def test_composite_strength_matches_elementwise():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(3, 200)) * 3
    a = rng.uniform(0, 2, 3)
    s = composite_strength(*z, *a)
    want = a[0] * np.abs(z[0]) + a[1] * z[1] + a[2] * z[2]
    assert np.allclose(s, want, rtol=0, atol=1e-12)


def test_composite_strength_nan_and_zero_weight():
    s = composite_strength([1.0, np.nan], [1.0, 1.0], [1.0, 1.0])
    assert s[0] == 3.0 and math.isnan(s[1])
    s = composite_strength([1.0, np.nan], [1.0, 1.0], [1.0, 1.0], alpha_r=0.0)
    assert list(s) == [2.0, 2.0]


def test_composite_strength_all_zero_weights_rejected():
    with pytest.raises(ConfigError):
        composite_strength([1.0], [1.0], [1.0], 0.0, 0.0, 0.0)


def test_attention_clamp_option():
    assert composite_strength([0.0], [0.0], [-2.0], clamp_attention_z=True)[0] == 0.0
    assert composite_strength([0.0], [0.0], [-2.0])[0] == -2.0


@settings(max_examples=80, deadline=None)
@given(finite, finite, finite, st.floats(0, 50), st.integers(0, 2))
def test_strength_monotone_in_each_term(zr, zs, za, bump, which):
    base = [abs(zr), zs, za]
    up = list(base)
    up[which] += bump
    assert composite_strength([up[0]], [up[1]], [up[2]])[0] >= composite_strength([base[0]], [base[1]], [base[2]])[0]


def test_warmup_mask():
    m = warmup_mask(50, 20, 20)
    assert m[:40].all() and not m[40:].any()


def test_deviation_frame_columns(cfg):
    n = 60
    rng = np.random.default_rng(1)
    panel = pd.DataFrame(
        {
            "ticker": "T",
            "date": pd.bdate_range("2024-01-01", periods=n).to_numpy("datetime64[D]"),
            "r": rng.normal(0, 0.01, n),
            "sigma": rng.uniform(0.01, 0.02, n),
            "A": rng.uniform(0, 1, n),
        }
    )
    for s in cfg.attention_sources:
        panel[s] = rng.uniform(0, 1, n)
    dev = deviation_frame(panel, cfg)
    assert list(dev.columns[:7]) == ["ticker", "date", "z_r", "z_sigma", "z_A", "s", "warmup"]
    assert [c for c in dev.columns[7:]] == [f"z_{s}" for s in cfg.attention_sources]
    assert dev["z_r"].isna().sum() == 20
