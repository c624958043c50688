"""Split-conformal calibration: two-sided intervals and one-sided quantile estimators.

The one-sided lower variant turns a fitted conditional quantile Q(alpha, x)
into the calibrated bound Q(alpha, x) - Q_E(1 - alpha), where Q_E is the
finite-sample quantile of the signed exceedance scores on a held-out
calibration set. Under exchangeability the frequency of observations falling
below the bound is at most alpha (up to the usual 1/(m+1) slack).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientCalibration, TooFewRows
from .quantile_models import SupervisedSet, _validate_level

__all__ = [
    "SplitPlan",
    "ConformityScores",
    "ConformalQuantileEstimator",
    "PredictionInterval",
    "make_split",
    "score_quantile",
    "conformalize_lower",
    "conformalize_upper",
    "cqr_interval",
]


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/calibration index sets over one supervised set."""

    train_indices: np.ndarray
    calib_indices: np.ndarray
    scheme: str = "chronological-half"

    def __post_init__(self):
        train = np.asarray(self.train_indices, dtype=int)
        calib = np.asarray(self.calib_indices, dtype=int)
        if train.size == 0 or calib.size == 0:
            raise TooFewRows("both split halves must be non-empty")
        if np.intersect1d(train, calib).size:
            raise ValueError("train and calibration indices must be disjoint")
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "calib_indices", calib)


def make_split(n_rows: int, scheme: str = "chronological-half") -> SplitPlan:
    """First ceil(n/2) rows train, the remainder calibrate."""
    if scheme != "chronological-half":
        raise ValueError(f"unknown split scheme {scheme!r}")
    if n_rows < 4:
        raise TooFewRows(f"need at least 4 rows to split, got {n_rows}")
    cut = math.ceil(n_rows / 2)
    return SplitPlan(np.arange(cut), np.arange(cut, n_rows), scheme)


@dataclass(frozen=True)
class ConformityScores:
    scores: np.ndarray
    side: str  # {lower, upper, two-sided}

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 1 or scores.size == 0:
            raise ValueError("scores must be a non-empty vector")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if self.side not in ("lower", "upper", "two-sided"):
            raise ValueError(f"unknown side {self.side!r}")
        object.__setattr__(self, "scores", scores)


def score_quantile(scores: ConformityScores, level: float) -> float:
    """Finite-sample score quantile: the ceil(level * (m + 1))-th smallest score.

    Raises InsufficientCalibration when the rank exceeds m, i.e. when the
    coverage guarantee is unattainable at this calibration size.
    """
    level = _validate_level(level)
    m = scores.scores.shape[0]
    rank = math.ceil(level * (m + 1))
    if rank > m:
        raise InsufficientCalibration(rank, m, level)
    # Ties are broken by value then position, which is what a stable sort gives.
    return float(np.sort(scores.scores, kind="stable")[rank - 1])


@dataclass(frozen=True)
class ConformalQuantileEstimator:
    """A base quantile model plus its per-level conformal adjustment Q_E(1 - alpha)."""

    base: object
    side: str  # {lower, upper}
    alpha: float
    adjustment: float
    calib_size: int

    def predict(self, x) -> np.ndarray:
        if self.side == "lower":
            return self.base.predict(x, self.alpha) - self.adjustment
        return self.base.predict(x, 1.0 - self.alpha) + self.adjustment


@dataclass(frozen=True)
class PredictionInterval:
    lo: float
    hi: float
    clamped: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi


def conformalize_lower(
    base, calib: SupervisedSet, alpha: float
) -> ConformalQuantileEstimator:
    """Calibrated lower-tail quantile estimator x -> Q(alpha, x) - Q_E(1 - alpha).

    Scores are the signed exceedances Q(alpha, X_t) - Y_t on the calibration set.
    """
    alpha = _validate_level(alpha)
    fitted = base.predict(calib.features, alpha)
    scores = ConformityScores(fitted - calib.targets, side="lower")
    adj = score_quantile(scores, 1.0 - alpha)
    return ConformalQuantileEstimator(base, "lower", alpha, adj, calib.n_rows)


def conformalize_upper(
    base, calib: SupervisedSet, alpha: float
) -> ConformalQuantileEstimator:
    """Calibrated upper-tail quantile estimator x -> Q(1 - alpha, x) + Q_E(1 - alpha).

    Scores are Y_t - Q(1 - alpha, X_t) on the calibration set.
    """
    alpha = _validate_level(alpha)
    fitted = base.predict(calib.features, 1.0 - alpha)
    scores = ConformityScores(calib.targets - fitted, side="upper")
    adj = score_quantile(scores, 1.0 - alpha)
    return ConformalQuantileEstimator(base, "upper", alpha, adj, calib.n_rows)


def cqr_interval(
    base_lo,
    base_hi,
    calib: SupervisedSet,
    alpha: float,
    x,
    *,
    precomputed_adjustment: Optional[float] = None,
) -> PredictionInterval:
    """Two-sided split-CQR interval [Q(a/2, x) - Q_E, Q(1 - a/2, x) + Q_E].

    Scores are max{Q(a/2, X_t) - Y_t, Y_t - Q(1 - a/2, X_t)}. When base levels
    cross by more than 2 * Q_E the adjusted interval would invert; it is then
    clamped to its midpoint and flagged.
    """
    alpha = _validate_level(alpha)
    if precomputed_adjustment is None:
        lo_fit = base_lo.predict(calib.features, alpha / 2.0)
        hi_fit = base_hi.predict(calib.features, 1.0 - alpha / 2.0)
        scores = ConformityScores(
            np.maximum(lo_fit - calib.targets, calib.targets - hi_fit),
            side="two-sided",
        )
        adj = score_quantile(scores, 1.0 - alpha)
    else:
        adj = float(precomputed_adjustment)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lo = float(base_lo.predict(x, alpha / 2.0)[0]) - adj
    hi = float(base_hi.predict(x, 1.0 - alpha / 2.0)[0]) + adj
    if lo > hi:
        mid = 0.5 * (lo + hi)
        return PredictionInterval(mid, mid, clamped=True)
    return PredictionInterval(lo, hi)
