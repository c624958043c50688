import numpy as np
import pytest

from conquant import dgp, experiments
from conquant.experiments import (
    DEFAULT_LEVELS,
    ExperimentConfig,
    run_experiment,
    run_iteration,
    run_unit_root_study,
)
from conquant.quantile_models import QrfConfig

FAST_QRF = QrfConfig(n_trees=10, seed=0)


def small_config(**overrides):
    defaults = dict(
        dgp_kind="ar2_cauchy",
        n_train=60,
        n_test=40,
        iterations=2,
        levels=(0.1, 0.5, 0.9),
        models=("QR",),
        n_lags=2,
        qrf=FAST_QRF,
        master_seed=7,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestConfig:
    def test_default_levels_grid(self):
        assert len(DEFAULT_LEVELS) == 20
        assert DEFAULT_LEVELS[0] == 0.01
        assert DEFAULT_LEVELS[1] == 0.05
        assert DEFAULT_LEVELS[-1] == 0.95

    def test_rejects_bad_levels(self):
        with pytest.raises(ValueError):
            small_config(levels=(0.5, 1.5))
        with pytest.raises(ValueError):
            small_config(levels=(0.5, 0.4))

    def test_rejects_small_train(self):
        with pytest.raises(ValueError):
            small_config(n_train=6, n_lags=3)

    def test_rejects_unknown_model(self):
        with pytest.raises(ValueError):
            small_config(models=("QR", "GBM"))

    def test_hash_stable_and_sensitive(self):
        a, b = small_config(), small_config()
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != small_config(master_seed=8).config_hash()


class TestRunIteration:
    def test_only_requested_models(self):
        out = run_iteration(small_config(), 0)
        assert set(out) == {"QR"}
        assert out["QR"]["coverage"].shape == (3,)

    def test_noise_free_series_covers_everything(self, monkeypatch):
        # Deterministic unit-noise random walk (y_t = t): QR with the correct
        # lag fits exactly, residuals vanish, and the <= convention yields
        # coverage 1 at every level.
        def fake_generate(cfg, seed):
            n = cfg.n_train + cfg.n_test + cfg.n_lags
            return dgp.simulate_ar1(1.0, n, noise_values=np.ones(n))

        monkeypatch.setattr(experiments, "_generate", fake_generate)
        out = run_iteration(small_config(n_lags=1), 0)
        assert np.allclose(out["QR"]["coverage"], 1.0)

    def test_coverages_in_unit_interval(self):
        cfg = small_config(models=("QR", "QRF", "CQR_QR", "CQR_QRF"))
        out = run_iteration(cfg, 1)
        for name in cfg.models:
            cov = out[name]["coverage"]
            ok = ~np.isnan(cov)
            assert np.all((cov[ok] >= 0) & (cov[ok] <= 1))

    def test_insufficient_calibration_cells_are_nan(self):
        # n_train=60 -> CQR calib half has 30 points; level 0.01 needs the
        # 0.99-score quantile with rank 31 > 30, hence NA.
        cfg = small_config(models=("CQR_QR",), levels=(0.01, 0.5))
        out = run_iteration(cfg, 0)
        assert np.isnan(out["CQR_QR"]["coverage"][0])
        assert not np.isnan(out["CQR_QR"]["coverage"][1])


class TestRunExperiment:
    def test_single_iteration_matches_run_iteration(self):
        cfg = small_config(iterations=1)
        res = run_experiment(cfg)
        single = run_iteration(cfg, 0)
        assert np.allclose(
            res.coverages["QR"][:, 0], single["QR"]["coverage"], equal_nan=True
        )

    def test_determinism(self):
        a = run_experiment(small_config())
        b = run_experiment(small_config())
        assert np.array_equal(a.coverages["QR"], b.coverages["QR"], equal_nan=True)
        assert a.mae == b.mae

    def test_partial_flag_and_na_accounting(self):
        cfg = small_config(models=("CQR_QR",), levels=(0.01, 0.5))
        res = run_experiment(cfg)
        assert res.partial
        assert res.reports["CQR_QR"].na_cells == cfg.iterations

    def test_report_structure(self):
        cfg = small_config(models=("QR", "QRF"))
        res = run_experiment(cfg)
        for name in cfg.models:
            report = res.reports[name]
            assert [rec.level for rec in report.records] == list(cfg.levels)
            assert set(report.summary) == {"within", "below", "above"}
            assert report.mae == pytest.approx(
                np.mean([abs(c - lv) for lv, c in report.curve])
            )


class TestUnitRootStudy:
    def test_explosive_flagged_not_crashing(self):
        cfg = small_config(models=("QR",), iterations=1, n_train=40, n_test=20)
        out = run_unit_root_study(cfg, phis=(1.05,), n_values=(40,))
        assert out[1.05].degenerate

    def test_stationary_not_flagged(self):
        cfg = small_config(models=("QR",), iterations=1, n_train=40, n_test=20)
        out = run_unit_root_study(cfg, phis=(0.95,), n_values=(40,))
        assert not out[0.95].degenerate
        assert np.isfinite(out[0.95].mae["QR"])
