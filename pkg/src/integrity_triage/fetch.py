"""Daily OHLCV retrieval from an HTTP aggregates endpoint, with a CSV cache.

The payload shape is the common aggregates format::

    {"status": "OK", "results": [{"t": <epoch ms>, "o": .., "h": .., "l": .., "c": .., "v": ..}, ...]}

Rate-limit answers (429) and transient server errors are retried with
bounded exponential backoff, honoring ``Retry-After`` when present.
"""

from __future__ import annotations

import logging
import os
import time
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from .config import FetchSettings
from .errors import AuthError, DataQualityError, FetchError, MalformedPayloadError
from .io import read_ohlcv, write_ohlcv
from .panel import OHLCV_COLUMNS, Bar, bars_frame, to_day

log = logging.getLogger(__name__)

RETRYABLE = {429, 500, 502, 503, 504}


class RateLimiter:
    """Spaces calls at least ``60 / per_minute`` seconds apart."""

    def __init__(self, per_minute: float, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        self.interval = 60.0 / per_minute if per_minute > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        if self._last is not None and self.interval > 0:
            delay = self._last + self.interval - self._clock()
            if delay > 0:
                self._sleep(delay)
        self._last = self._clock()


def cache_file(settings: FetchSettings, ticker: str, start: str, end: str) -> Path:
    return Path(settings.cache_dir) / f"{ticker}_{start}_{end}.csv"


def parse_payload(payload, ticker: str) -> list[Bar]:
    """Turn an aggregates payload into validated bars (sorted, de-duplicated dates rejected)."""
    if not isinstance(payload, dict):
        raise MalformedPayloadError(f"expected a JSON object, got {type(payload).__name__}", ticker)
    status = str(payload.get("status", "OK")).upper()
    if status not in ("OK", "DELAYED"):
        raise MalformedPayloadError(f"endpoint status {payload.get('status')!r}", ticker)
    results = payload.get("results", [])
    if results is None:
        results = []
    if not isinstance(results, list):
        raise MalformedPayloadError("'results' is not a list", ticker)
    bars = []
    for i, item in enumerate(results):
        try:
            t = np.datetime64(int(item["t"]), "ms").astype("datetime64[D]")
            bar = Bar(ticker, t, float(item["o"]), float(item["h"]), float(item["l"]), float(item["c"]), float(item["v"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPayloadError(f"result {i} is malformed: {exc!r}", ticker) from None
        problems = bar.problems()
        if problems:
            raise DataQualityError(f"bar {i} ({t}) fails quality checks: {', '.join(problems)}", ticker)
        bars.append(bar)
    bars.sort(key=lambda b: b.t)
    for a, b in zip(bars, bars[1:]):
        if a.t == b.t:
            raise DataQualityError(f"duplicate bar date {a.t}", ticker)
    return bars


def fetch_ohlcv(
    ticker: str,
    start: str,
    end: str,
    settings: FetchSettings,
    *,
    session=None,
    sleep: Callable[[float], None] = time.sleep,
    limiter: RateLimiter | None = None,
) -> pd.DataFrame:
    """Daily bars for ``ticker`` over ``[start, end]``; cached as canonical OHLCV CSV.

    ``session`` needs a ``get(url, params=..., timeout=...)`` method returning
    an object with ``status_code``, ``headers`` and ``json()`` (a
    ``requests.Session`` fits). A cache hit makes no network call.
    """
    start, end = str(to_day(start)), str(to_day(end))
    path = cache_file(settings, ticker, start, end)
    if path.exists():
        log.debug("cache hit %s", path)
        return read_ohlcv(path).get(ticker, pd.DataFrame(columns=OHLCV_COLUMNS))

    key = os.environ.get(settings.api_key_env)
    if not key:
        raise AuthError(f"credential environment variable {settings.api_key_env} is not set", ticker)
    if session is None:
        import requests

        session = requests.Session()
    url = settings.url_template.format(ticker=ticker, **{"from": start, "to": end})
    params = {settings.api_key_param: key}

    attempt = 0
    while True:
        if limiter is not None:
            limiter.wait()
        try:
            resp = session.get(url, params=params, timeout=settings.timeout_seconds)
        except Exception as exc:  # transport errors from any client
            status, retry_after, err = None, None, exc
        else:
            status, err = resp.status_code, None
            retry_after = resp.headers.get("Retry-After") if getattr(resp, "headers", None) else None
            if status in (401, 403):
                raise AuthError(f"endpoint refused the credential (HTTP {status})", ticker)
            if status == 200:
                try:
                    payload = resp.json()
                except ValueError as exc:
                    raise MalformedPayloadError(f"response is not JSON: {exc}", ticker) from None
                bars = parse_payload(payload, ticker)
                frame = bars_frame(bars)
                write_ohlcv(path, {ticker: frame})
                return frame
            if status not in RETRYABLE:
                raise FetchError(f"HTTP {status} from data endpoint", ticker)
        attempt += 1
        if attempt > settings.max_retries:
            what = f"HTTP {status}" if status is not None else f"network error {err!r}"
            raise FetchError(f"giving up after {settings.max_retries} retries ({what})", ticker)
        delay = min(settings.backoff_seconds * 2 ** (attempt - 1), settings.max_backoff_seconds)
        if retry_after is not None:
            try:
                delay = min(float(retry_after), settings.max_backoff_seconds)
            except ValueError:
                pass
        log.info("%s: retry %d in %.1fs (%s)", ticker, attempt, delay, status or err)
        sleep(delay)


def fetch_many(tickers, start, end, settings: FetchSettings, **kwargs) -> dict[str, pd.DataFrame]:
    limiter = kwargs.pop("limiter", None) or RateLimiter(settings.requests_per_minute, sleep=kwargs.get("sleep", time.sleep))
    return {t: fetch_ohlcv(t, start, end, settings, limiter=limiter, **kwargs) for t in sorted(tickers)}
