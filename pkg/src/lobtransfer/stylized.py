"""Stylized facts of mid-price returns and a KS-based scenario distance.

Facts used: log returns at 1- and 10-minute horizons, and the linear
autocorrelation of 1-minute returns for lags spanning 30 minutes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .distance import DistanceMatrix
from .kernel import NS_PER_MINUTE


class UndefinedStatistic(ValueError):
    """The statistic has no value for this input (e.g. zero variance)."""


def mids_on_grid(quotes: Sequence[tuple], market_open: int, step: int = NS_PER_MINUTE) -> np.ndarray:
    """Mid prices at ``market_open + k * step`` from a quote tape; NaN where one-sided."""
    out = []
    for t, bid, ask, _bv, _av in quotes:
        if (t - market_open) % step:
            continue
        out.append((bid + ask) / 2 if bid is not None and ask is not None else math.nan)
    return np.asarray(out, dtype=float)


def compute_returns(mids: Sequence[float], horizon: int, grid_step: int = 1) -> np.ndarray:
    """ln m[t + horizon] - ln m[t] for each grid point where both mids exist.

    ``horizon`` and ``grid_step`` share a unit (e.g. nanoseconds, or both 1
    with ``horizon`` counted in grid points); ``horizon`` must be a
    multiple of ``grid_step``.
    """
    if horizon <= 0 or grid_step <= 0 or horizon % grid_step:
        raise ValueError("horizon must be a positive multiple of grid_step")
    lag = horizon // grid_step
    m = np.asarray(mids, dtype=float)
    if len(m) <= lag:
        return np.empty(0)
    a, b = m[:-lag], m[lag:]
    ok = np.isfinite(a) & np.isfinite(b) & (a > 0) & (b > 0)
    return np.log(b[ok]) - np.log(a[ok])


def autocorrelation(returns: Sequence[float], max_lag: int, include_zero: bool = False) -> np.ndarray:
    """Pearson correlation of (r[t], r[t + lag]) over overlapping pairs, lag 1..max_lag."""
    r = np.asarray(returns, dtype=float)
    if len(r) < max_lag + 2:
        raise UndefinedStatistic(f"need at least {max_lag + 2} returns, got {len(r)}")
    out = [1.0] if include_zero else []
    for lag in range(1, max_lag + 1):
        x, y = r[:-lag], r[lag:]
        dx, dy = x - x.mean(), y - y.mean()
        denom = math.sqrt(float(dx @ dx)) * math.sqrt(float(dy @ dy))
        if denom == 0.0:
            raise UndefinedStatistic(f"zero variance at lag {lag}")
        c = float(dx @ dy) / denom
        out.append(min(1.0, max(-1.0, c)))
    return np.asarray(out)


def distribution_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("distribution_distance needs two nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass
class StylizedFacts:
    returns_1m: np.ndarray
    returns_10m: np.ndarray
    acf: np.ndarray  # acf values pooled over episodes, lags 1..max_lag each
    acf_curves: List[np.ndarray] = field(default_factory=list)

    def samples(self) -> Dict[str, np.ndarray]:
        return {"returns_1min": self.returns_1m, "returns_10min": self.returns_10m, "acf": self.acf}


def episode_facts(quotes: Sequence[tuple], market_open: int, max_lag: int = 30):
    mids = mids_on_grid(quotes, market_open, NS_PER_MINUTE)
    r1 = compute_returns(mids, 1)
    r10 = compute_returns(mids, 10)
    try:
        acf = autocorrelation(r1, max_lag)
    except UndefinedStatistic:
        acf = None
    return r1, r10, acf


def scenario_facts(records: Sequence, market_open: Optional[int] = None, max_lag: int = 30) -> StylizedFacts:
    """Pool the facts of several episodes (EpisodeRecord-like objects or quote tapes)."""
    r1s, r10s, curves = [], [], []
    for rec in records:
        quotes = rec.quotes if hasattr(rec, "quotes") else rec
        mo = market_open if market_open is not None else quotes[0][0]
        r1, r10, acf = episode_facts(quotes, mo, max_lag)
        r1s.append(r1)
        r10s.append(r10)
        if acf is not None:
            curves.append(acf)
    pooled_acf = np.concatenate(curves) if curves else np.empty(0)
    return StylizedFacts(np.concatenate(r1s), np.concatenate(r10s), pooled_acf, curves)


def facts_distance(a: StylizedFacts, b: StylizedFacts) -> float:
    sa, sb = a.samples(), b.samples()
    return float(np.mean([distribution_distance(sa[k], sb[k]) for k in sa]))


def sf_distance_matrix(facts: Mapping[str, StylizedFacts]) -> DistanceMatrix:
    labels = list(facts)
    n = len(labels)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = facts_distance(facts[labels[i]], facts[labels[j]])
    return DistanceMatrix(out, labels)


def histogram(values: Sequence[float], bins: int = 50, value_range=None):
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=value_range)
    return edges, counts
