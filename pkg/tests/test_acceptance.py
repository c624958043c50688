"""End-to-end acceptance gate.

Each test pins one externally checkable property of the package — finite-sample
coverage guarantees on exchangeable data, simulation-study calibration bands,
solver and statistics oracles, and artifact determinism — at desk scale with
explicit tolerances. These tests are slower than the unit suites; run them with
`pytest tests/test_acceptance.py -v`.
"""
import json
import math
import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conquant.cli import main as cli_main
from conquant.conformal import (
    ConformityScores,
    cqr_interval,
    conformalize_lower,
    score_quantile,
)
from conquant.dgp import student_t2_quantile
from conquant.errors import InsufficientCalibration
from conquant.evaluation import pit_values, wilson_interval
from conquant.experiments import (
    ExperimentConfig,
    run_exog_study,
    run_experiment,
    run_unit_root_study,
)
from conquant.gar import BacktestConfig, load_macro_csv, run_backtest
from conquant.quantile_models import (
    QrfConfig,
    SupervisedSet,
    fit_qr,
    pinball_loss,
)


def _draw_linear_t2(rng, n, p, beta):
    x = rng.normal(size=(n, p))
    y = x @ beta + student_t2_quantile(rng.uniform(size=n))
    return x, y


@pytest.fixture(scope="module")
def exchangeable_coverage():
    """Shared Monte-Carlo run for the one-sided and interval guarantees.

    50 replications of: draw iid (X, Y) with linear signal and t2 noise, fit
    linear QR on 200 training pairs, calibrate on m = 499, evaluate on 500
    fresh test pairs.
    """
    alphas = (0.05, 0.1, 0.25)
    m = 499
    one_sided = {a: [] for a in alphas}
    interval = []
    rng = np.random.default_rng(20240817)
    for _ in range(50):
        beta = rng.normal(size=3)
        x_tr, y_tr = _draw_linear_t2(rng, 200, 3, beta)
        x_cal, y_cal = _draw_linear_t2(rng, m, 3, beta)
        x_te, y_te = _draw_linear_t2(rng, 500, 3, beta)
        train = SupervisedSet(x_tr, y_tr)
        calib = SupervisedSet(x_cal, y_cal)
        base = fit_qr(train, (0.05, 0.1, 0.25, 0.95))
        for a in alphas:
            est = conformalize_lower(base, calib, a)
            one_sided[a].append(np.mean(y_te <= est.predict(x_te)))
        # Two-sided CQR at alpha = 0.1 uses the 0.05/0.95 base pair; compute
        # the shared adjustment once, then score every test point.
        lo_fit = base.predict(x_cal, 0.05)
        hi_fit = base.predict(x_cal, 0.95)
        two_sided = ConformityScores(
            np.maximum(lo_fit - y_cal, y_cal - hi_fit), side="two-sided"
        )
        adj = score_quantile(two_sided, 0.9)
        hits = [
            cqr_interval(
                base, base, calib, 0.1, x_te[t], precomputed_adjustment=adj
            ).contains(y_te[t])
            for t in range(y_te.shape[0])
        ]
        interval.append(np.mean(hits))
    return m, {a: float(np.mean(v)) for a, v in one_sided.items()}, float(
        np.mean(interval)
    )


class TestGuarantees:
    def test_c01_one_sided_coverage_guarantee(self, exchangeable_coverage):
        m, one_sided, _ = exchangeable_coverage
        for alpha, cov in one_sided.items():
            assert cov <= alpha + 1.0 / (m + 1) + 0.02, (
                f"alpha={alpha}: coverage {cov:.4f} exceeds bound"
            )

    def test_c02_interval_coverage_guarantee(self, exchangeable_coverage):
        m, _, cov = exchangeable_coverage
        assert 0.90 - 0.02 <= cov <= 0.90 + 1.0 / (m + 1) + 0.02, (
            f"interval coverage {cov:.4f} outside band"
        )


class TestSimulationStudies:
    def test_c03_heavy_tail_calibration_bands(self):
        cfg = ExperimentConfig(
            dgp_kind="ar2_cauchy",
            iterations=100,
            models=("QR", "QRF", "CQR_QRF"),
            master_seed=0,
        )
        res = run_experiment(cfg)
        assert res.mae["CQR_QRF"] < res.mae["QRF"], res.mae
        assert 0.01 <= res.mae["QRF"] <= 0.035, res.mae
        assert 0.004 <= res.mae["QR"] <= 0.016, res.mae

    def test_c04_exogenous_conformal_improvement(self):
        cfg = ExperimentConfig(
            dgp_kind="ar2_exog",
            iterations=50,
            models=("QR", "CQR_QR"),
            master_seed=0,
        )
        study = run_exog_study(cfg, ratios=(0.1, 0.4))
        assert study.mae["CQR_QR"] <= study.mae["QR"] / 3, study.mae
        assert study.classification["QR"]["below"] >= 25.0, study.classification
        assert study.classification["CQR_QR"]["below"] <= 10.0, study.classification

    def test_c05_lag_misspecification_stability(self):
        # Linear-plus-exogenous DGP with a correctly specified exogenous block;
        # only the autoregressive order is varied between fits.
        maes = {}
        for n_lags in (1, 2, 3):
            cfg = ExperimentConfig(
                dgp_kind="ar2_exog", iterations=40, n_lags=n_lags, master_seed=0
            )
            maes[n_lags] = run_exog_study(cfg, ratios=(0.1,)).mae
        for name in ("QR", "QRF", "CQR_QR", "CQR_QRF"):
            vals = [maes[k][name] for k in (1, 2, 3)]
            spread = max(vals) - min(vals)
            assert spread < 0.01, f"{name}: MAE spread {spread:.4f} across lags"

    def test_c06_near_unit_root_ordering_and_degeneracy(self):
        cfg = ExperimentConfig(iterations=25, qrf=QrfConfig(n_trees=50))
        out = run_unit_root_study(cfg, phis=(0.95, 1.05), n_values=(98, 198))
        mae = out[0.95].mae
        assert mae["QR"] < mae["CQR_QR"] < mae["CQR_QRF"] < mae["QRF"], mae
        assert not out[0.95].degenerate
        assert out[1.05].degenerate
        assert all(np.isfinite(v) or np.isnan(v) for v in out[1.05].mae.values())


def _minimizer_interval(values, tau):
    """Closed interval of constants minimizing the pinball loss."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.shape[0]
    k = tau * n
    if abs(k - round(k)) < 1e-12:
        k = int(round(k))
        if k == 0:
            return v[0], v[0]
        if k == n:
            return v[-1], v[-1]
        return v[k - 1], v[k]
    return v[math.ceil(k) - 1], v[math.ceil(k) - 1]


class TestOracles:
    def test_c07_qr_solver_matches_quantile_oracle(self):
        rng = np.random.default_rng(7)
        taus = np.round(np.arange(0.05, 1.0, 0.05), 2)
        for _ in range(1000):
            n = int(rng.integers(2, 30))
            tau = float(rng.choice(taus))
            y = rng.normal(scale=rng.uniform(0.5, 5.0), size=n)
            model = fit_qr(SupervisedSet(np.empty((n, 0)), y), (tau,))
            fitted = float(model.predict(np.empty((1, 0)), tau)[0])
            lo, hi = _minimizer_interval(y, tau)
            assert lo - 1e-8 <= fitted <= hi + 1e-8
        for i in range(20):
            gen = np.random.default_rng(100 + i)
            x = gen.normal(size=(30, 2))
            y = x @ gen.normal(size=2) + gen.standard_t(df=3, size=30)
            model = fit_qr(SupervisedSet(x, y), (0.3,))
            fit_loss = pinball_loss(y - model.predict(x, 0.3), 0.3)
            grid = np.linspace(-3, 3, 25)
            best = np.inf
            for b0 in grid:
                for b1 in grid:
                    preds = b0 + x[:, 0:1] * b1 + x[:, 1:2] * grid
                    losses = np.mean(
                        np.maximum(0.3 * (y[:, None] - preds), 0.7 * (preds - y[:, None])),
                        axis=0,
                    )
                    best = min(best, float(losses.min()))
            assert fit_loss <= best + 1e-6

    def test_c08_score_quantile_matches_sort_oracle(self):
        rng = np.random.default_rng(8)
        levels = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)
        for m in range(1, 501):
            raw = rng.normal(size=m)
            scores = ConformityScores(raw, side="lower")
            ordered = np.sort(raw)
            for level in levels:
                rank = math.ceil(level * (m + 1))
                if rank > m:
                    with pytest.raises(InsufficientCalibration):
                        score_quantile(scores, level)
                else:
                    assert score_quantile(scores, level) == ordered[rank - 1]

    def test_c09_wilson_matches_closed_form(self):
        z = 1.959964
        rng = np.random.default_rng(9)
        for _ in range(1000):
            n = int(rng.integers(1, 10_000))
            s = int(rng.integers(0, n + 1))
            p = s / n
            denom = 1 + z * z / n
            center = (p + z * z / (2 * n)) / denom
            half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
            ci = wilson_interval(s, n, z)
            assert ci.lo == pytest.approx(center - half, abs=1e-9)
            assert ci.hi == pytest.approx(center + half, abs=1e-9)

    def test_c10_pit_uniform_under_true_quantiles(self):
        levels = np.round(np.arange(0.01, 1.0, 0.01), 2)
        grid = stats.norm.ppf(levels)
        rng = np.random.default_rng(10)
        pits = pit_values(levels, grid, rng.standard_normal(10_000))
        assert stats.kstest(pits, "uniform").pvalue > 0.01


MACRO_CSV = os.environ.get("CONQUANT_MACRO_CSV", "data/macro_quarterly.csv")


@pytest.mark.skipif(
    not Path(MACRO_CSV).exists(),
    reason="quarterly macro CSV not supplied (set CONQUANT_MACRO_CSV)",
)
class TestEmpiricalBacktest:
    def test_c11_conformal_beats_base_on_macro_data(self):
        results = {}
        for mode, cols in (
            ("nfci_plus_lag", None),
            ("components_pca_plus_lag", "auto"),
        ):
            ds = load_macro_csv(
                MACRO_CSV,
                component_cols=cols,
                require_components=mode == "components_pca_plus_lag",
            )
            for h in (1, 4):
                cfg = BacktestConfig(
                    horizon=h, predictor_mode=mode, models=("QR", "CQR_QR")
                )
                results[(mode, h)] = run_backtest(ds, cfg).mae
        for key, mae in results.items():
            assert mae["CQR_QR"] < mae["QR"], (key, mae)
        for h in (1, 4):
            assert (
                results[("components_pca_plus_lag", h)]["CQR_QR"]
                < results[("nfci_plus_lag", h)]["CQR_QR"]
            ), results


class TestDeterminism:
    def test_c12_identical_runs_identical_artifacts(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "dgp": {"kind": "ar2_cauchy"},
                    "n_train": 98,
                    "n_test": 50,
                    "iterations": 3,
                    "levels": [0.05, 0.25, 0.5, 0.75, 0.95],
                    "models": ["QR", "CQR_QR"],
                    "master_seed": 12,
                }
            )
        )
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli_main(["simulate", "--config", str(cfg_path), "--out", str(a)]) == 0
        assert cli_main(["simulate", "--config", str(cfg_path), "--out", str(b)]) == 0
        for name in ("summary.csv", "result.csv", "classification.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
