"""Reference implementations used only by the tests.

Nothing here imports the package. Each oracle is a slow, literal restatement
of one rule (explicit loops, pure Python arithmetic) so that agreement with
the vectorized production code is meaningful.
"""

from __future__ import annotations

import math
from decimal import Decimal, getcontext


def _below(v, thr):
    return v is None or (isinstance(v, float) and math.isnan(v)) or v <= thr


def oracle_segment(s, thr_high, thr_low, gap=0, min_len=1):
    """Bar-by-bar hysteresis machine; returns a list of (start, end) pairs.

    States are spelled out as strings so the trace reads like the rule:
    IDLE until a bar beats thr_high, then ACTIVE; in ACTIVE every bar above
    thr_low is evidence; ``gap + 1`` quiet bars in a row end the window,
    whose end is the last evidence bar.
    """
    if thr_high < thr_low:
        raise ValueError("thr_high < thr_low")
    state = "IDLE"
    found = []
    start = last_evidence = None
    quiet = 0
    for t in range(len(s)):
        v = s[t]
        if state == "IDLE":
            if not _below(v, thr_high):
                state = "ACTIVE"
                start = last_evidence = t
                quiet = 0
        else:
            if not _below(v, thr_low):
                last_evidence = t
                quiet = 0
            else:
                quiet = quiet + 1
                if quiet == gap + 1:
                    found.append((start, last_evidence))
                    state = "IDLE"
    if state == "ACTIVE":
        found.append((start, last_evidence))
    return [(a, b) for (a, b) in found if b - a + 1 >= min_len]


def oracle_simple_hysteresis(s, thr_high, thr_low):
    """gap=0, min_len=1 closed form: every maximal run above thr_low that
    contains a bar above thr_high yields [first such bar, end of run]."""
    out = []
    n = len(s)
    t = 0
    while t < n:
        if _below(s[t], thr_low):
            t += 1
            continue
        u = t
        while u + 1 < n and not _below(s[u + 1], thr_low):
            u += 1
        hits = [k for k in range(t, u + 1) if not _below(s[k], thr_high)]
        if hits:
            out.append((hits[0], u))
        t = u + 1
    return out


def oracle_single_threshold(s, thr, gap=0, min_len=1):
    """thr_high == thr_low closed form: maximal runs above thr, runs joined
    when at most ``gap`` bars separate them, then the length filter."""
    runs = []
    n = len(s)
    t = 0
    while t < n:
        if _below(s[t], thr):
            t += 1
            continue
        u = t
        while u + 1 < n and not _below(s[u + 1], thr):
            u += 1
        runs.append([t, u])
        t = u + 1
    joined = []
    for r in runs:
        if joined and r[0] - joined[-1][1] - 1 <= gap:
            joined[-1][1] = r[1]
        else:
            joined.append(r)
    return [(a, b) for a, b in joined if b - a + 1 >= min_len]


def oracle_merge(spans, gap):
    spans = sorted(spans)
    out = []
    for a, b in spans:
        if out and a - out[-1][1] - 1 <= gap:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


def oracle_baseline(x, B, eps):
    """Two-pass trailing mean / sample std / z. Undefined slots are None."""
    n = len(x)
    mu, sd, z = [None] * n, [None] * n, [None] * n
    for t in range(n):
        if t < B:
            continue
        win = [float(v) for v in x[t - B : t]]
        if any(math.isnan(v) for v in win):
            continue
        m = math.fsum(win) / B
        var = math.fsum((v - m) ** 2 for v in win) / (B - 1)
        s = math.sqrt(var + eps)
        mu[t], sd[t] = m, s
        if not math.isnan(float(x[t])):
            z[t] = (float(x[t]) - m) / (s + eps)
    return mu, sd, z


def oracle_pearson(x, y):
    """Two-pass covariance over complete pairs; constant input -> 0.0.
    Returns (value, n_pairs)."""
    pairs = [(float(a), float(b)) for a, b in zip(x, y) if not (math.isnan(a) or math.isnan(b))]
    n = len(pairs)
    if n < 2:
        return 0.0, n
    mx = math.fsum(p[0] for p in pairs) / n
    my = math.fsum(p[1] for p in pairs) / n
    sxx = math.fsum((p[0] - mx) ** 2 for p in pairs)
    syy = math.fsum((p[1] - my) ** 2 for p in pairs)
    if len({p[0] for p in pairs}) == 1 or len({p[1] for p in pairs}) == 1:
        return 0.0, n
    sxy = math.fsum((p[0] - mx) * (p[1] - my) for p in pairs)
    return sxy / math.sqrt(sxx * syy), n


def oracle_phi4(z_r, z_s, z_a):
    return 0.5 * (oracle_pearson(z_r, z_a)[0] + oracle_pearson(z_s, z_a)[0])


def oracle_interval_sums(times, values, grid):
    """Slot k sums values with grid[k-1] < t <= grid[k]; slot 0 takes t == grid[0]."""
    out = []
    for k, g in enumerate(grid):
        lo = grid[k - 1] if k > 0 else None
        tot = 0.0
        for t, v in zip(times, values):
            if (lo is None and t == g) or (lo is not None and lo < t <= g):
                tot += v
        out.append(tot)
    return out


def oracle_log_returns(closes, digits=40):
    getcontext().prec = digits
    out = [math.nan]
    for a, b in zip(closes, closes[1:]):
        out.append(float((Decimal(b) / Decimal(a)).ln()))
    return out


def oracle_rolling_vol(r, L, eps):
    out = []
    for t in range(len(r)):
        prior = r[t - L : t] if t >= L else None
        if prior is None or any(math.isnan(v) for v in prior):
            out.append(math.nan)
        else:
            out.append(math.sqrt(math.fsum(v * v for v in prior) / L + eps))
    return out


def oracle_ewma(r, lam, eps):
    out = []
    v = None
    for x in r:
        if math.isnan(x):
            out.append(math.nan)
            continue
        v = x * x if v is None else lam * v + (1 - lam) * x * x
        out.append(math.sqrt(v + eps))
    return out


def oracle_rank_pct(M):
    n = len(M)
    return [sum(1 for b in M if b <= a) / n for a in M]


def oracle_recurrence(spans, scores, delta, tau):
    """spans: list of (ticker, start, end); exhaustive pair enumeration."""
    out = []
    for i, (ti, ai, bi) in enumerate(spans):
        c = 0
        for j, (tj, aj, bj) in enumerate(spans):
            if i == j or ti != tj or not scores[j] > tau:
                continue
            if bi < aj:
                d = aj - bi
            elif bj < ai:
                d = ai - bj
            else:
                d = 0
            if d < delta:
                c += 1
        out.append(c)
    return out


def oracle_pooled_pop_std(columns):
    vals = [float(v) for col in columns for v in col if not math.isnan(v)]
    m = math.fsum(vals) / len(vals)
    return math.sqrt(math.fsum((v - m) ** 2 for v in vals) / len(vals))
