"""Growth-at-Risk backtest: expanding-window retraining over quarterly macro data.

At each forecast origin the pipeline refits PCA (when configured) and the
requested quantile models on information available up to that quarter only,
predicts a full quantile grid for the h-step-ahead average growth target, and
records the probability integral transform of the realized value. Calibration
is then summarized by the PIT curve against the diagonal.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from .conformal import conformalize_lower, make_split
from .errors import (
    ConquantError,
    DegenerateMatrix,
    NonMonotoneDates,
    SchemaMismatch,
    TooShort,
)
from .evaluation import (
    CalibrationReport,
    CoverageRecord,
    classify_levels,
    monotonize,
    pit_calibration_curve,
    pit_values,
)
from .experiments import DEFAULT_LEVELS, MODELS
from .quantile_models import QrfConfig, SupervisedSet, fit_qr, fit_qrf

__all__ = [
    "MacroDataset",
    "BacktestConfig",
    "PcaProjection",
    "BacktestResult",
    "load_macro_csv",
    "make_target",
    "fit_pca",
    "run_backtest",
]

FINE_GRID = tuple(round(0.01 * k, 2) for k in range(1, 100))


@dataclass(frozen=True)
class MacroDataset:
    dates: tuple
    gdp_growth: np.ndarray
    nfci: Optional[np.ndarray] = None
    components: Optional[np.ndarray] = None
    component_names: tuple = ()

    def __post_init__(self):
        gdp = np.asarray(self.gdp_growth, dtype=float)
        object.__setattr__(self, "gdp_growth", gdp)
        n = gdp.shape[0]
        if len(self.dates) != n:
            raise SchemaMismatch("dates and gdp_growth lengths differ")
        if self.nfci is not None:
            nfci = np.asarray(self.nfci, dtype=float)
            if nfci.shape[0] != n:
                raise SchemaMismatch("nfci length differs from gdp_growth")
            object.__setattr__(self, "nfci", nfci)
        if self.components is not None:
            comp = np.asarray(self.components, dtype=float)
            if comp.shape[0] != n:
                raise SchemaMismatch("components row count differs from gdp_growth")
            object.__setattr__(self, "components", comp)

    def __len__(self) -> int:
        return self.gdp_growth.shape[0]


@dataclass(frozen=True)
class BacktestConfig:
    horizon: int = 1  # quarters ahead; 4 = one year
    predictor_mode: str = "nfci_plus_lag"  # {nfci_plus_lag, components_pca_plus_lag, lag_only}
    pca_variance: float = 0.90
    quantile_grid: tuple = FINE_GRID
    reporting_levels: tuple = DEFAULT_LEVELS
    min_train: int = 40
    models: tuple = MODELS
    qrf: QrfConfig = field(default_factory=QrfConfig)
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.predictor_mode not in (
            "nfci_plus_lag",
            "components_pca_plus_lag",
            "lag_only",
        ):
            raise ValueError(f"unknown predictor_mode {self.predictor_mode!r}")
        grid = np.asarray(self.quantile_grid, dtype=float)
        if np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
            raise ValueError("quantile_grid must be strictly increasing in (0, 1)")
        if not 0.0 < self.pca_variance <= 1.0:
            raise ValueError("pca_variance must lie in (0, 1]")
        if self.min_train < 8:
            raise ValueError("min_train too small to support a half-split")


@dataclass(frozen=True)
class PcaProjection:
    """Standardize-then-project transform retaining a variance fraction."""

    means: np.ndarray
    scales: np.ndarray
    loadings: np.ndarray  # (k, r), orthonormal columns
    explained_ratio: np.ndarray
    kept_columns: np.ndarray

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]

    def transform(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))[:, self.kept_columns]
        return (x - self.means) / self.scales @ self.loadings


def load_macro_csv(
    path,
    date_col: str = "date",
    gdp_col: str = "gdp_growth",
    nfci_col: Optional[str] = "nfci",
    component_cols=None,
    require_components: bool = False,
) -> MacroDataset:
    """Read and validate the quarterly macro CSV.

    `component_cols` may be an explicit list or "auto", which takes every
    numeric column other than the date, target and NFCI columns. Rows with a
    missing target are dropped with a warning.
    """
    df = pd.read_csv(path)
    missing = [c for c in (date_col, gdp_col) if c not in df.columns]
    if missing:
        raise SchemaMismatch(f"missing required columns: {missing}")
    if nfci_col is not None and nfci_col not in df.columns:
        nfci_col = None
    if component_cols == "auto":
        skip = {date_col, gdp_col, nfci_col}
        component_cols = [
            c for c in df.columns
            if c not in skip and pd.api.types.is_numeric_dtype(df[c])
        ]
    if require_components and not component_cols:
        raise SchemaMismatch("component columns required but none found")
    if component_cols:
        absent = [c for c in component_cols if c not in df.columns]
        if absent:
            raise SchemaMismatch(f"missing component columns: {absent}")
    dates = pd.to_datetime(df[date_col])
    if not dates.is_monotonic_increasing or dates.duplicated().any():
        raise NonMonotoneDates("dates must be strictly increasing")
    n_missing = int(df[gdp_col].isna().sum())
    if n_missing:
        warnings.warn(f"dropped {n_missing} rows with missing {gdp_col}")
        df = df[df[gdp_col].notna()].reset_index(drop=True)
        dates = pd.to_datetime(df[date_col])
    return MacroDataset(
        tuple(dates.dt.strftime("%Y-%m-%d")),
        df[gdp_col].to_numpy(dtype=float),
        df[nfci_col].to_numpy(dtype=float) if nfci_col else None,
        df[list(component_cols)].to_numpy(dtype=float) if component_cols else None,
        tuple(component_cols or ()),
    )


def make_target(ds: MacroDataset, h: int):
    """h-step target: average growth over quarters t+1 .. t+h.

    Returns (feature_time_indices, targets); the last h rows are unusable.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    n = len(ds)
    if n <= h:
        raise TooShort(f"need more than h={h} rows, got {n}")
    g = ds.gdp_growth
    targets = np.array([np.mean(g[t + 1 : t + 1 + h]) for t in range(n - h)])
    return np.arange(n - h), targets


def fit_pca(components, variance_threshold: float) -> PcaProjection:
    """Standardized PCA keeping the smallest r with cumulative ratio >= threshold."""
    x = np.asarray(components, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateMatrix("PCA needs a 2-d matrix with at least 2 rows")
    means = x.mean(axis=0)
    stds = x.std(axis=0, ddof=1)
    keep = np.flatnonzero(stds > 0)
    if keep.size == 0:
        raise DegenerateMatrix("all columns have zero variance")
    if keep.size < x.shape[1]:
        warnings.warn(f"dropped {x.shape[1] - keep.size} zero-variance columns")
    z = (x[:, keep] - means[keep]) / stds[keep]
    _, svals, vt = np.linalg.svd(z, full_matrices=False)
    var = svals**2
    total = var.sum()
    if total <= 0:
        raise DegenerateMatrix("no variance left after standardization")
    ratio = var / total
    cumulative = np.cumsum(ratio)
    r = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    r = min(r, int(np.sum(svals > svals[0] * 1e-12)))
    return PcaProjection(means[keep], stds[keep], vt[:r].T, ratio[:r], keep)


def _features_at(ds, cfg, rows, pca: Optional[PcaProjection]):
    """Predictor matrix for the given row indices under the configured mode."""
    cols = []
    if cfg.predictor_mode == "nfci_plus_lag":
        if ds.nfci is None:
            raise SchemaMismatch("nfci_plus_lag mode requires an nfci column")
        cols.append(ds.nfci[rows])
    elif cfg.predictor_mode == "components_pca_plus_lag":
        if ds.components is None:
            raise SchemaMismatch(
                "components_pca_plus_lag mode requires component columns"
            )
        proj = pca.transform(ds.components[rows])
        cols.extend(proj[:, j] for j in range(proj.shape[1]))
    cols.append(ds.gdp_growth[rows])
    return np.column_stack(cols)


def _grid_predictions(name, train: SupervisedSet, x_new, grid, qrf_cfg):
    """Quantile-grid predictions at one origin; NaN where a level errored."""
    grid = np.asarray(grid, dtype=float)
    out = np.full(grid.shape[0], np.nan)
    if name == "QR":
        model = fit_qr(train, grid)
        for i, lv in enumerate(grid):
            out[i] = float(model.predict(x_new, lv)[0])
    elif name == "QRF":
        model = fit_qrf(train, qrf_cfg)
        out[:] = model.predict_levels(x_new, grid)[0]
    else:
        split = make_split(train.n_rows)
        fit_half = train.subset(split.train_indices)
        calib = train.subset(split.calib_indices)
        base = fit_qr(fit_half, grid) if name == "CQR_QR" else fit_qrf(fit_half, qrf_cfg)
        for i, lv in enumerate(grid):
            try:
                est = conformalize_lower(base, calib, lv)
                out[i] = float(est.predict(x_new)[0])
            except ConquantError:
                pass
    return out


@dataclass
class BacktestResult:
    config: BacktestConfig
    dates: tuple  # forecast-origin dates, one per recorded PIT
    pits: dict  # model -> np.ndarray aligned with dates (NaN = failed origin)
    reports: dict  # model -> CalibrationReport
    mae: dict  # model -> float


def run_backtest(ds: MacroDataset, cfg: BacktestConfig) -> BacktestResult:
    """Expanding-window backtest; PIT per origin, PIT-curve MAE per model."""
    h = cfg.horizon
    _, targets = make_target(ds, h)
    n_usable = targets.shape[0]
    first_origin = cfg.min_train + h
    if first_origin >= n_usable:
        raise TooShort(
            f"need more than min_train + h = {first_origin} usable rows, got {n_usable}"
        )
    origins = list(range(first_origin, n_usable))
    pits = {m: np.full(len(origins), np.nan) for m in cfg.models}
    for k, t in enumerate(origins):
        # Training pairs whose target is realized by origin t: s <= t - h.
        train_rows = np.arange(t - h + 1)
        pca = None
        if cfg.predictor_mode == "components_pca_plus_lag":
            pca = fit_pca(ds.components[: t + 1], cfg.pca_variance)
        x_train = _features_at(ds, cfg, train_rows, pca)
        x_new = _features_at(ds, cfg, np.array([t]), pca)
        train = SupervisedSet(x_train, targets[train_rows])
        qrf_cfg = replace(
            cfg.qrf,
            seed=int(np.random.SeedSequence([cfg.seed, t]).generate_state(1)[0]),
        )
        for name in cfg.models:
            try:
                preds = _grid_predictions(name, train, x_new, cfg.quantile_grid, qrf_cfg)
            except ConquantError:
                continue
            ok = ~np.isnan(preds)
            if np.sum(ok) < 2:
                continue
            lv = np.asarray(cfg.quantile_grid, dtype=float)[ok]
            pits[name][k] = pit_values(lv, monotonize(preds[ok]), float(targets[t]))
    reports, mae = {}, {}
    levels = np.asarray(cfg.reporting_levels, dtype=float)
    for name in cfg.models:
        sample = pits[name][~np.isnan(pits[name])]
        curve = pit_calibration_curve(sample, levels)
        err = [abs(v - lv) for lv, v in curve if not np.isnan(v)]
        mae[name] = float(np.mean(err)) if err else float("nan")
        records = tuple(
            CoverageRecord(lv, v, int(sample.size)) for lv, v in curve
        )
        cells = [(lv, int(round(v * sample.size)), int(sample.size)) for lv, v in curve]
        if sample.size:
            classes, summary = classify_levels(cells)
            classification = {lv: cls for (lv, _, _), cls in zip(cells, classes)}
        else:
            classification, summary = {}, {}
        reports[name] = CalibrationReport(
            records,
            mae[name],
            classification,
            tuple(curve),
            summary,
            int(np.sum(np.isnan(pits[name]))),
        )
    dates = tuple(ds.dates[t] for t in origins)
    return BacktestResult(cfg, dates, pits, reports, mae)
