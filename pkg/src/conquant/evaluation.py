"""Calibration metrics: empirical coverage, coverage MAE, Wilson-score
classification, calibration curves, and the probability integral transform."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    InvalidCounts,
    LengthMismatch,
    UnsortedGrid,
)

__all__ = [
    "DEFAULT_Z",
    "CoverageRecord",
    "WilsonInterval",
    "CalibrationReport",
    "empirical_coverage",
    "calibration_mae",
    "wilson_interval",
    "classify_levels",
    "monotonize",
    "pit_values",
    "pit_calibration_curve",
]

DEFAULT_Z = 1.959964


@dataclass(frozen=True)
class CoverageRecord:
    level: float
    coverage: float
    n_obs: int


@dataclass(frozen=True)
class WilsonInterval:
    lo: float
    hi: float
    z: float = DEFAULT_Z

    def contains(self, p: float) -> bool:
        return self.lo <= p <= self.hi


@dataclass(frozen=True)
class CalibrationReport:
    """Per-level coverage summary for one model configuration."""

    records: tuple  # of CoverageRecord
    mae: float
    classification: dict  # level -> {within, below, above}
    curve: tuple  # of (level, coverage)
    summary: dict = field(default_factory=dict)  # within/below/above percentages
    na_cells: int = 0


def empirical_coverage(estimates, y_test) -> float:
    """Fraction of test points falling at or below their paired quantile estimate."""
    q = np.asarray(estimates, dtype=float)
    y = np.asarray(y_test, dtype=float)
    if q.shape != y.shape or q.ndim != 1:
        raise LengthMismatch(f"estimates shape {q.shape} vs targets shape {y.shape}")
    if q.size == 0:
        raise LengthMismatch("need at least one test point")
    return float(np.mean(y <= q))


def calibration_mae(per_iteration_coverages, levels) -> float:
    """Mean |coverage - level| over every (level, iteration) cell.

    NaN cells (errored runs) are excluded; an all-NaN input is an error.
    """
    cov = np.asarray(per_iteration_coverages, dtype=float)
    lv = np.asarray(levels, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != lv.shape[0]:
        raise EmptyInput(
            f"coverage matrix {cov.shape} inconsistent with {lv.shape[0]} levels"
        )
    err = np.abs(cov - lv[:, None])
    if cov.size == 0 or np.all(np.isnan(err)):
        raise EmptyInput("no coverage cells to average")
    return float(np.nanmean(err))


def wilson_interval(successes: int, n: int, z: float = DEFAULT_Z) -> WilsonInterval:
    """Wilson score interval for a binomial proportion."""
    if n < 1 or not 0 <= successes <= n:
        raise InvalidCounts(f"successes={successes}, n={n}")
    p = successes / n
    denom = 1.0 + z * z / n
    centre = p + z * z / (2.0 * n)
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    return WilsonInterval((centre - half) / denom, (centre + half) / denom, z)


def classify_levels(pooled, z: float = DEFAULT_Z):
    """Classify each (level, successes, n) cell against its Wilson interval.

    Returns (per-cell classes, summary percentages). A level is `within` when
    it lies inside the interval built around the pooled empirical coverage,
    `below` when it falls below the interval (coverage significantly exceeds
    the level), and `above` in the opposite case.
    """
    classes = []
    for level, successes, n in pooled:
        ci = wilson_interval(successes, n, z)
        if level < ci.lo:
            classes.append("below")
        elif level > ci.hi:
            classes.append("above")
        else:
            classes.append("within")
    total = len(classes)
    summary = {
        key: (100.0 * classes.count(key) / total if total else 0.0)
        for key in ("within", "below", "above")
    }
    return classes, summary


def monotonize(estimates) -> np.ndarray:
    """Sort (rearrange) a quantile grid's estimates so they form a valid CDF."""
    return np.sort(np.asarray(estimates, dtype=float))


def pit_values(levels, estimates, y_realized):
    """Probability integral transform of realized values through a quantile grid.

    The level is read off by piecewise-linear interpolation of level as a
    function of estimate. Outside the grid the value is extended linearly to 0
    at (first estimate - one grid step) and to 1 symmetrically above, so the
    transform reaches the full [0, 1] range.
    """
    lv = np.asarray(levels, dtype=float)
    q = np.asarray(estimates, dtype=float)
    if lv.ndim != 1 or lv.size == 0 or q.shape != lv.shape:
        raise UnsortedGrid("grid must pair one estimate with each level")
    if np.any(np.diff(lv) <= 0):
        raise UnsortedGrid("levels must be strictly increasing")
    if np.any(np.diff(q) < 0):
        raise UnsortedGrid("estimates must be monotonized before the PIT")
    if lv.size > 1:
        step_lo = q[1] - q[0]
        step_hi = q[-1] - q[-2]
    else:
        step_lo = step_hi = 0.0
    span = q[-1] - q[0]
    fallback = span / lv.size if span > 0 else 1.0
    step_lo = step_lo if step_lo > 0 else fallback
    step_hi = step_hi if step_hi > 0 else fallback
    q_ext = np.concatenate([[q[0] - step_lo], q, [q[-1] + step_hi]])
    lv_ext = np.concatenate([[0.0], lv, [1.0]])
    # np.interp clamps to 0/1 outside the extended support.
    out = np.interp(np.asarray(y_realized, dtype=float), q_ext, lv_ext)
    return float(out) if np.isscalar(y_realized) else out


def pit_calibration_curve(pits, levels: Optional[Sequence[float]] = None):
    """Empirical CDF of PIT values at each reporting level; (level, value) pairs."""
    p = np.asarray(pits, dtype=float)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("PIT values must lie in [0, 1]")
    if levels is None:
        levels = np.round(np.arange(0.05, 1.0, 0.05), 2)
    lv = np.asarray(levels, dtype=float)
    frac = np.array([np.mean(p <= t) if p.size else np.nan for t in lv])
    return list(zip(lv.tolist(), frac.tolist()))
