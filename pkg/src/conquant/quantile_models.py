"""Base conditional-quantile learners: linear quantile regression and quantile random forest.

Linear QR minimises the pinball objective via its exact LP formulation
(solved with HiGHS through scipy). The forest grows CART regression trees
and answers any quantile level through the weighted empirical CDF of the
training targets, with weight 1/|leaf| for co-leaf points averaged over trees.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.optimize import linprog
from sklearn.tree import DecisionTreeRegressor

from .errors import (
    DimensionMismatch,
    EmptyData,
    LevelNotFitted,
    SingularDesign,
)

__all__ = [
    "SupervisedSet",
    "QrfConfig",
    "LinearQuantileModel",
    "QuantileForestModel",
    "fit_qr",
    "fit_qrf",
    "predict_quantile",
    "pinball_loss",
]

_LEVEL_ATOL = 1e-12


def _validate_level(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {tau}")
    return tau


@dataclass(frozen=True)
class SupervisedSet:
    """Lag-expanded design matrix with aligned targets, rows in temporal order."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if features.ndim != 2:
            raise DimensionMismatch(f"features must be 2-d, got shape {features.shape}")
        if targets.ndim != 1:
            raise DimensionMismatch(f"targets must be 1-d, got shape {targets.shape}")
        if features.shape[0] != targets.shape[0]:
            raise DimensionMismatch(
                f"{features.shape[0]} feature rows vs {targets.shape[0]} targets"
            )
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise ValueError("features and targets must be finite")
        names = tuple(self.feature_names) or tuple(
            f"x{i}" for i in range(features.shape[1])
        )
        if len(names) != features.shape[1]:
            raise DimensionMismatch(
                f"{len(names)} feature names for {features.shape[1]} columns"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.targets.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "SupervisedSet":
        idx = np.asarray(indices, dtype=int)
        return SupervisedSet(self.features[idx], self.targets[idx], self.feature_names)


@dataclass(frozen=True)
class QrfConfig:
    """Quantile-forest hyperparameters; mtry=None means max(1, p // 3)."""

    n_trees: int = 100
    min_leaf: int = 2
    mtry: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive when given")


def pinball_loss(residuals: np.ndarray, tau: float) -> float:
    """Mean check loss rho_tau(u) = u * (tau - 1[u < 0]) over residuals."""
    u = np.asarray(residuals, dtype=float)
    return float(np.mean(u * (tau - (u < 0))))


def _check_design_rank(design: np.ndarray, feature_names: Sequence[str]):
    n, k = design.shape
    _, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(n, k) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < k:
        names = ["intercept"] + list(feature_names)
        bad = sorted(names[j] for j in piv[rank:])
        raise SingularDesign(bad)


def _solve_pinball_lp(design: np.ndarray, y: np.ndarray, tau: float):
    """Exact LP for min_beta sum_t rho_tau(y_t - design_t . beta).

    Variables are (beta, u_plus, u_minus) with y - design @ beta = u+ - u-.
    Returns (beta, converged).
    """
    n, k = design.shape
    c = np.concatenate([np.zeros(k), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = scipy.sparse.identity(n, format="csc")
    a_eq = scipy.sparse.hstack(
        [scipy.sparse.csc_matrix(design), eye, -eye], format="csc"
    )
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if res.status == 0:
        return res.x[:k], True
    # Fall back to iteratively reweighted least squares with epsilon smoothing;
    # the result is flagged as unconverged only if this too fails to settle.
    beta, converged = _irls_pinball(design, y, tau)
    return beta, converged


def _irls_pinball(design, y, tau, max_iter=200, tol=1e-10):
    n, k = design.shape
    beta = np.linalg.lstsq(design, y, rcond=None)[0]
    eps = 1e-2
    for it in range(max_iter):
        r = y - design @ beta
        w = np.where(r >= 0, tau, 1.0 - tau) / np.sqrt(r * r + eps * eps)
        wd = design * w[:, None]
        beta_new = np.linalg.lstsq(wd.T @ design, wd.T @ y, rcond=None)[0]
        step = np.max(np.abs(beta_new - beta))
        beta = beta_new
        eps = max(eps * 0.7, 1e-8)
        if step < tol and eps <= 1e-8:
            return beta, True
    warnings.warn("pinball IRLS hit the iteration cap; returning best iterate")
    return beta, False


class LinearQuantileModel:
    """Linear QR fit at a fixed set of levels; one coefficient vector per level.

    Coefficients include the intercept as the leading entry.
    """

    kind = "linear-qr"

    def __init__(self, coefficients, feature_names, converged):
        self._coef = {float(t): np.asarray(b, dtype=float) for t, b in coefficients.items()}
        self.feature_names = tuple(feature_names)
        self.converged = dict(converged)

    @property
    def fitted_levels(self):
        return tuple(sorted(self._coef))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def coefficients(self, tau: float) -> np.ndarray:
        key = self._match_level(tau)
        return self._coef[key].copy()

    def _match_level(self, tau: float) -> float:
        for key in self._coef:
            if abs(key - tau) <= _LEVEL_ATOL:
                return key
        raise LevelNotFitted(f"level {tau} was not fitted; have {self.fitted_levels}")

    def predict(self, x, tau: float) -> np.ndarray:
        beta = self._coef[self._match_level(tau)]
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} features, got {x.shape[1]}"
            )
        return beta[0] + x @ beta[1:]


class QuantileForestModel:
    """Forest of CART trees answering any level via the weighted empirical CDF.

    Each tree stores, per leaf, the (bootstrap) training rows that landed in it;
    a query point receives weight 1/|leaf| towards each of those rows, averaged
    over trees, and the quantile is the left-continuous generalized inverse
    inf{y : F_hat(y) >= tau} of the resulting CDF.
    """

    kind = "qrf"

    def __init__(self, trees, inbag_rows, train_targets, feature_names, config):
        self._trees = trees
        self._inbag_rows = inbag_rows  # per tree: leaf_id -> array of training rows
        self._targets = np.asarray(train_targets, dtype=float)
        self.feature_names = tuple(feature_names)
        self.config = config
        self._order = np.argsort(self._targets, kind="stable")
        self._sorted_targets = self._targets[self._order]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _weights(self, x: np.ndarray) -> np.ndarray:
        """Per-training-row CDF weights for each query row; shape (m, n_train)."""
        m = x.shape[0]
        n = self._targets.shape[0]
        if self.n_features == 0:
            x = np.zeros((m, 1))  # surrogate column used when fitting featureless data
        w = np.zeros((m, n))
        for tree, leaf_map in zip(self._trees, self._inbag_rows):
            leaves = tree.apply(x)
            for j in range(m):
                rows, counts = leaf_map[leaves[j]]
                w[j, rows] += counts
        w /= len(self._trees)
        return w

    def predict_levels(self, x, taus) -> np.ndarray:
        """Quantiles at every level in `taus` for each query row; shape (m, L)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} features, got {x.shape[1]}"
            )
        taus = np.asarray([_validate_level(t) for t in np.atleast_1d(taus)])
        w = self._weights(x)
        cdf = np.cumsum(w[:, self._order], axis=1)
        # Guard against round-off at the top of the CDF.
        cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
        out = np.empty((x.shape[0], taus.shape[0]))
        for j in range(x.shape[0]):
            idx = np.searchsorted(cdf[j] + 1e-12, taus, side="left")
            out[j] = self._sorted_targets[np.minimum(idx, cdf.shape[1] - 1)]
        return out

    def predict(self, x, tau: float) -> np.ndarray:
        return self.predict_levels(x, [tau])[:, 0]


def fit_qr(data: SupervisedSet, levels) -> LinearQuantileModel:
    """Fit linear quantile regression at each level by exact pinball-LP solve."""
    levels = sorted({_validate_level(t) for t in np.atleast_1d(levels)})
    if not levels:
        raise ValueError("levels must be non-empty")
    if data.n_rows < data.n_features + 2:
        raise EmptyData(
            f"need at least {data.n_features + 2} rows, got {data.n_rows}"
        )
    design = np.column_stack([np.ones(data.n_rows), data.features])
    _check_design_rank(design, data.feature_names)
    coefficients, converged = {}, {}
    for tau in levels:
        beta, ok = _solve_pinball_lp(design, data.targets, tau)
        coefficients[tau] = beta
        converged[tau] = ok
    return LinearQuantileModel(coefficients, data.feature_names, converged)


def fit_qrf(data: SupervisedSet, config: QrfConfig) -> QuantileForestModel:
    """Grow the quantile forest; deterministic given config.seed."""
    if data.n_rows == 0:
        raise EmptyData("no training rows")
    if data.n_rows < config.min_leaf:
        raise EmptyData(
            f"need at least min_leaf={config.min_leaf} rows, got {data.n_rows}"
        )
    n, p = data.n_rows, data.n_features
    mtry = config.mtry if config.mtry is not None else max(1, p // 3)
    mtry = min(mtry, max(p, 1))
    trees, inbag = [], []
    for i in range(config.n_trees):
        ss = np.random.SeedSequence([config.seed, i])
        rng = np.random.default_rng(ss)
        if config.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        tree = DecisionTreeRegressor(
            min_samples_leaf=config.min_leaf,
            max_features=mtry if p > 0 else None,
            random_state=int(ss.generate_state(1)[0] % (2**31 - 1)),
        )
        x_fit = data.features[rows] if p > 0 else np.zeros((n, 1))
        tree.fit(x_fit, data.targets[rows])
        leaves = tree.apply(x_fit)
        leaf_map = {}
        for leaf in np.unique(leaves):
            members = rows[leaves == leaf]
            uniq, counts = np.unique(members, return_counts=True)
            leaf_map[leaf] = (uniq, counts / members.shape[0])
        trees.append(tree)
        inbag.append(leaf_map)
    if p == 0:
        # Featureless data is handled by a single-leaf surrogate column.
        feature_names = ()
    else:
        feature_names = data.feature_names
    return QuantileForestModel(trees, inbag, data.targets, feature_names, config)


def predict_quantile(model, x, tau: float) -> float:
    """Scalar convenience wrapper: one feature vector, one level."""
    tau = _validate_level(tau)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return float(model.predict(x, tau)[0])
