"""End-to-end simulation studies: generate, split, fit, conformalize, evaluate.

One iteration draws a fresh series, trains the requested models on the first
n_train supervised rows (CQR variants on a chronological half-split of that
window), predicts the level grid at the 100 held-out test rows using their
realized lagged features, and records per-level empirical coverage. Runs
aggregate iterations into coverage-MAE and pooled Wilson classifications.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import dgp
from .conformal import conformalize_lower, make_split
from .errors import ConquantError
from .evaluation import CalibrationReport, CoverageRecord, classify_levels
from .quantile_models import QrfConfig, fit_qr, fit_qrf

__all__ = [
    "DEFAULT_LEVELS",
    "MODELS",
    "ExperimentConfig",
    "ExperimentResult",
    "ExogStudyResult",
    "UnitRootResult",
    "run_iteration",
    "run_experiment",
    "run_exog_study",
    "run_unit_root_study",
]

DEFAULT_LEVELS = (0.01,) + tuple(round(0.05 * k, 2) for k in range(1, 20))
MODELS = ("QR", "QRF", "CQR_QR", "CQR_QRF")


@dataclass(frozen=True)
class ExperimentConfig:
    dgp_kind: str = "ar2_cauchy"  # {ar2_cauchy, ar2_exog, ar1_root}
    noise: str = "student_t2"  # ar2_exog only: {student_t2, normal}
    phi: float = 0.95  # ar1_root only
    p: int = 1  # ar2_exog only
    n_train: int = 198
    n_test: int = 100
    iterations: int = 100
    levels: tuple = DEFAULT_LEVELS
    models: tuple = MODELS
    n_lags: int = 2
    qrf: QrfConfig = field(default_factory=QrfConfig)
    master_seed: int = 0

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.size == 0 or np.any(lv <= 0) or np.any(lv >= 1) or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be strictly increasing within (0, 1)")
        if self.n_train <= 2 * (self.n_lags + 1):
            raise ValueError("n_train must exceed 2 * (n_lags + 1)")
        if self.n_test < 1 or self.iterations < 1:
            raise ValueError("n_test and iterations must be positive")
        unknown = set(self.models) - set(MODELS)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")
        if self.dgp_kind not in ("ar2_cauchy", "ar2_exog", "ar1_root"):
            raise ValueError(f"unknown dgp_kind {self.dgp_kind!r}")

    def config_hash(self) -> str:
        payload = asdict(self)
        payload["qrf"] = asdict(self.qrf)
        blob = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    coverages: dict  # model -> (levels, iterations) array, NaN = errored cell
    mae: dict  # model -> float
    reports: dict  # model -> CalibrationReport
    pooled: dict  # model -> list of (level, successes, n)
    partial: bool = False
    degenerate: bool = False


def _iteration_seeds(master_seed: int, iteration: int):
    state = np.random.SeedSequence([int(master_seed), int(iteration)]).generate_state(2)
    return int(state[0]), int(state[1])


def _generate(cfg: ExperimentConfig, seed: int) -> dgp.SeriesFrame:
    n_total = cfg.n_train + cfg.n_test + cfg.n_lags
    if cfg.dgp_kind == "ar2_cauchy":
        return dgp.simulate_ar2_cauchy(n_total, seed=seed)
    if cfg.dgp_kind == "ar2_exog":
        return dgp.simulate_ar2_exog(n_total, cfg.p, noise=cfg.noise, seed=seed)
    return dgp.simulate_ar1(cfg.phi, n_total, seed=seed)


def _model_coverages(name, train, test_x, test_y, cfg, qrf_seed):
    """Per-level (coverage, successes) for one model; NaN marks errored cells."""
    levels = np.asarray(cfg.levels, dtype=float)
    n_levels = levels.shape[0]
    cov = np.full(n_levels, np.nan)
    succ = np.full(n_levels, np.nan)
    qrf_cfg = replace(cfg.qrf, seed=qrf_seed)
    try:
        if name == "QR":
            model = fit_qr(train, levels)
            preds = {lv: model.predict(test_x, lv) for lv in levels}
        elif name == "QRF":
            model = fit_qrf(train, qrf_cfg)
            mat = model.predict_levels(test_x, levels)
            preds = {lv: mat[:, i] for i, lv in enumerate(levels)}
        else:
            split = make_split(train.n_rows)
            fit_half = train.subset(split.train_indices)
            calib = train.subset(split.calib_indices)
            if name == "CQR_QR":
                base = fit_qr(fit_half, levels)
            else:
                base = fit_qrf(fit_half, qrf_cfg)
            preds = {}
            for lv in levels:
                try:
                    est = conformalize_lower(base, calib, lv)
                    preds[lv] = est.predict(test_x)
                except ConquantError:
                    pass
    except ConquantError:
        return cov, succ
    for i, lv in enumerate(levels):
        if lv in preds:
            s = float(np.sum(test_y <= preds[lv]))
            succ[i] = s
            cov[i] = s / test_y.shape[0]
    return cov, succ


def run_iteration(cfg: ExperimentConfig, iteration: int):
    """One full draw-fit-evaluate pass; returns model -> per-level arrays."""
    dgp_seed, qrf_seed = _iteration_seeds(cfg.master_seed, iteration)
    frame = _generate(cfg, dgp_seed)
    out = {}
    expected = cfg.n_train + cfg.n_test
    if len(frame) - cfg.n_lags < expected:
        # Overflow-truncated explosive path: every cell is an errored cell.
        n_levels = len(cfg.levels)
        for name in cfg.models:
            out[name] = {
                "coverage": np.full(n_levels, np.nan),
                "successes": np.full(n_levels, np.nan),
                "n_test": cfg.n_test,
            }
        return out
    sup = dgp.build_supervised(frame, cfg.n_lags)
    train = sup.subset(np.arange(cfg.n_train))
    test = sup.subset(np.arange(cfg.n_train, cfg.n_train + cfg.n_test))
    for name in cfg.models:
        cov, succ = _model_coverages(
            name, train, test.features, test.targets, cfg, qrf_seed
        )
        out[name] = {"coverage": cov, "successes": succ, "n_test": cfg.n_test}
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Aggregate `cfg.iterations` independent iterations into one result."""
    levels = np.asarray(cfg.levels, dtype=float)
    n_levels = levels.shape[0]
    coverages = {m: np.full((n_levels, cfg.iterations), np.nan) for m in cfg.models}
    successes = {m: np.full((n_levels, cfg.iterations), np.nan) for m in cfg.models}
    for it in range(cfg.iterations):
        per_model = run_iteration(cfg, it)
        for name in cfg.models:
            coverages[name][:, it] = per_model[name]["coverage"]
            successes[name][:, it] = per_model[name]["successes"]
    mae, reports, pooled = {}, {}, {}
    partial = False
    degenerate = False
    for name in cfg.models:
        cov = coverages[name]
        na_cells = int(np.sum(np.isnan(cov)))
        partial = partial or na_cells > 0
        # Reported MAE is the distance of the iteration-averaged calibration
        # curve from the diagonal; averaging first removes the finite-test-set
        # binomial noise floor that a per-iteration absolute error would carry.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            curve_err = np.abs(np.nanmean(cov, axis=1) - levels)
        if np.all(np.isnan(curve_err)):
            mae[name] = float("nan")
            degenerate = True
        else:
            mae[name] = float(np.nanmean(curve_err))
        cells = []
        for i, lv in enumerate(levels):
            ok = ~np.isnan(successes[name][i])
            n_pooled = int(np.sum(ok)) * cfg.n_test
            if n_pooled:
                cells.append((float(lv), int(np.nansum(successes[name][i])), n_pooled))
        pooled[name] = cells
        classes, summary = classify_levels(cells)
        classification = {lv: cls for (lv, _, _), cls in zip(cells, classes)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean_cov = np.nanmean(cov, axis=1)
        records = tuple(
            CoverageRecord(float(lv), float(mean_cov[i]), cfg.n_test * cfg.iterations)
            for i, lv in enumerate(levels)
        )
        curve = tuple((float(lv), float(mean_cov[i])) for i, lv in enumerate(levels))
        reports[name] = CalibrationReport(
            records, mae[name], classification, curve, summary, na_cells
        )
    if cfg.dgp_kind == "ar1_root" and cfg.phi > 1.0:
        degenerate = True
    return ExperimentResult(
        cfg, coverages, mae, reports, pooled, partial, degenerate
    )


@dataclass
class ExogStudyResult:
    per_ratio: dict  # ratio -> ExperimentResult
    mae: dict  # model -> MAE averaged over ratios
    classification: dict  # model -> summary percentages pooled over ratios


def run_exog_study(cfg: ExperimentConfig, ratios=(0.1, 0.2, 0.3, 0.4)) -> ExogStudyResult:
    """Exogenous-covariate study over a grid of p / n_train ratios."""
    per_ratio = {}
    for ratio in ratios:
        p = max(1, round(ratio * cfg.n_train))
        rcfg = replace(cfg, dgp_kind="ar2_exog", p=p)
        per_ratio[ratio] = run_experiment(rcfg)
    mae = {
        m: float(np.nanmean([per_ratio[r].mae[m] for r in ratios]))
        for m in cfg.models
    }
    classification = {}
    for m in cfg.models:
        cells = [cell for r in ratios for cell in per_ratio[r].pooled[m]]
        _, summary = classify_levels(cells)
        classification[m] = summary
    return ExogStudyResult(per_ratio, mae, classification)


@dataclass
class UnitRootResult:
    per_n: dict  # n_train -> ExperimentResult
    mae: dict  # model -> MAE averaged over n
    degenerate: bool


def run_unit_root_study(
    cfg: ExperimentConfig,
    phis=(0.95, 1.0, 1.05),
    n_values=(98, 198, 998),
):
    """Near-unit-root study; returns phi -> UnitRootResult.

    The explosive case (phi > 1) completes with a degenerate flag instead of
    crashing; its errored cells surface as NaN coverages.
    """
    out = {}
    for phi in phis:
        per_n = {}
        for n_train in n_values:
            rcfg = replace(
                cfg, dgp_kind="ar1_root", phi=float(phi), n_train=n_train, n_lags=1
            )
            per_n[n_train] = run_experiment(rcfg)
        mae = {
            m: float(np.nanmean([per_n[n].mae[m] for n in n_values]))
            if not all(np.isnan(per_n[n].mae[m]) for n in n_values)
            else float("nan")
            for m in cfg.models
        }
        degenerate = phi > 1.0 or any(per_n[n].degenerate for n in n_values)
        out[phi] = UnitRootResult(per_n, mae, degenerate)
    return out
