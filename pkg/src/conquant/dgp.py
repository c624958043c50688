"""Seeded generators for the simulation-study data-generating processes.

All randomness flows through numpy's PCG64 via SeedSequence, so identical
(spec, seed) pairs reproduce bit-identical series; per-iteration substreams
are derived as SeedSequence([seed, iteration]). Heavy-tailed noise is drawn
by inverse-CDF from uniforms, which keeps the draws exact and portable.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TooShort
from .quantile_models import SupervisedSet

__all__ = [
    "DgpSpec",
    "SeriesFrame",
    "cauchy_quantile",
    "student_t2_quantile",
    "simulate_ar2_cauchy",
    "simulate_ar2_exog",
    "simulate_ar1",
    "build_supervised",
    "series_to_csv",
]

OVERFLOW_LIMIT = 1e300
DEFAULT_BURN_IN = 100


@dataclass(frozen=True)
class DgpSpec:
    kind: str  # {ar2_cauchy, ar2_exog, ar1_root}
    phi: tuple
    noise: str  # {cauchy, student_t2, normal}
    p: int = 0
    seed: int = 0
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if self.kind in ("ar2_cauchy", "ar2_exog") and len(self.phi) != 2:
            raise ValueError(f"{self.kind} needs exactly 2 phi coefficients")
        if self.kind == "ar1_root" and len(self.phi) != 1:
            raise ValueError("ar1_root needs exactly 1 phi coefficient")
        if self.noise not in ("cauchy", "student_t2", "normal"):
            raise ValueError(f"unknown noise {self.noise!r}")
        if self.p < 0 or self.burn_in < 0:
            raise ValueError("p and burn_in must be non-negative")


@dataclass(frozen=True)
class SeriesFrame:
    """Target vector plus optional exogenous matrix, with generation metadata."""

    y: np.ndarray
    X: Optional[np.ndarray] = None
    meta: Optional[DgpSpec] = None
    overflowed: bool = False

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if self.X is not None:
            x = np.asarray(self.X, dtype=float)
            if x.shape[0] != y.shape[0]:
                raise ValueError("X rows must match series length")
            if not np.all(np.isfinite(x)):
                raise ValueError("exogenous matrix must be finite")
            object.__setattr__(self, "X", x)
        if not np.all(np.isfinite(y)):
            raise ValueError("series must be finite")

    def __len__(self) -> int:
        return self.y.shape[0]


def cauchy_quantile(u):
    """Inverse CDF of Cauchy(0, 1)."""
    return np.tan(np.pi * (np.asarray(u, dtype=float) - 0.5))


def student_t2_quantile(u):
    """Closed-form inverse CDF of Student's t with 2 degrees of freedom."""
    u = np.asarray(u, dtype=float)
    return (2.0 * u - 1.0) / np.sqrt(2.0 * u * (1.0 - u))


def _draw_noise(rng, n, noise: str) -> np.ndarray:
    if noise == "normal":
        return rng.standard_normal(n)
    u = rng.uniform(0.0, 1.0, size=n)
    if noise == "cauchy":
        return cauchy_quantile(u)
    return student_t2_quantile(u)


def _ar_recursion(phi, eps, exog_term=None):
    """y_t = sum_k phi_k y_{t-k} + exog_t + eps_t from zero initial conditions."""
    n = eps.shape[0]
    order = len(phi)
    y = np.zeros(n)
    state = [0.0] * order  # most recent first
    overflowed = False
    for t in range(n):
        val = sum(c * s for c, s in zip(phi, state)) + eps[t]
        if exog_term is not None:
            val += exog_term[t]
        if abs(val) > OVERFLOW_LIMIT:
            y = y[:t]
            overflowed = True
            break
        y[t] = val
        state = [val] + state[: order - 1]
    return y, overflowed


def simulate_ar2_cauchy(
    n_total: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
    noise_values: Optional[np.ndarray] = None,
) -> SeriesFrame:
    """AR(2) with phi = (0.5, -0.2) and Cauchy(0, 1) innovations.

    `noise_values` is a deterministic-injection hook for tests; when given it
    replaces the drawn innovations (burn-in included) and must have length
    n_total + burn_in.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    spec = DgpSpec("ar2_cauchy", (0.5, -0.2), "cauchy", 0, seed, burn_in)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    eps = (
        np.asarray(noise_values, dtype=float)
        if noise_values is not None
        else _draw_noise(rng, n_total + burn_in, "cauchy")
    )
    y, overflowed = _ar_recursion(spec.phi, eps)
    return SeriesFrame(y[burn_in:][:n_total], None, spec, overflowed)


def simulate_ar2_exog(
    n_total: int,
    p: int,
    noise: str = "student_t2",
    seed: int = 0,
    burn_in: int = DEFAULT_BURN_IN,
    noise_values: Optional[np.ndarray] = None,
    beta: Optional[np.ndarray] = None,
    x_values: Optional[np.ndarray] = None,
) -> SeriesFrame:
    """AR(2) plus exogenous regressors: y_t = 0.5 y_{t-1} - 0.2 y_{t-2} + beta.X_t + eps_t.

    beta_i ~ U(0, 1); X_t ~ N_p(m, Sigma) iid over t with m ~ N_p(0, I) and
    diagonal Sigma, sigma_i ~ U(0, 10), all drawn once per series from `seed`.
    The keyword overrides are deterministic-injection hooks for tests.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if p < 1:
        raise ValueError("p must be >= 1")
    spec = DgpSpec("ar2_exog", (0.5, -0.2), noise, p, seed, burn_in)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    n_all = n_total + burn_in
    if beta is None:
        beta = rng.uniform(0.0, 1.0, size=p)
    else:
        beta = np.asarray(beta, dtype=float)
    if x_values is None:
        m = rng.standard_normal(p)
        sigma = rng.uniform(0.0, 10.0, size=p)
        x_all = m + np.sqrt(sigma) * rng.standard_normal((n_all, p))
    else:
        x_all = np.asarray(x_values, dtype=float)
    eps = (
        np.asarray(noise_values, dtype=float)
        if noise_values is not None
        else _draw_noise(rng, n_all, noise)
    )
    y, overflowed = _ar_recursion(spec.phi, eps, exog_term=x_all @ beta)
    keep = slice(burn_in, burn_in + n_total)
    return SeriesFrame(y[keep], x_all[keep], spec, overflowed)


def simulate_ar1(
    phi: float,
    n_total: int,
    seed: int = 0,
    burn_in: Optional[int] = None,
    noise_values: Optional[np.ndarray] = None,
) -> SeriesFrame:
    """AR(1) with N(0, 1) innovations; y_0 = 0, no burn-in when phi >= 1.

    Explosive paths are truncated at |y| > 1e300 and flagged via
    SeriesFrame.overflowed.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if burn_in is None:
        burn_in = DEFAULT_BURN_IN if phi < 1.0 else 0
    if phi >= 1.0 and burn_in > 0:
        raise ValueError("burn-in is only meaningful for stationary (phi < 1) series")
    spec = DgpSpec("ar1_root", (float(phi),), "normal", 0, seed, burn_in)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    eps = (
        np.asarray(noise_values, dtype=float)
        if noise_values is not None
        else _draw_noise(rng, n_total + burn_in, "normal")
    )
    y, overflowed = _ar_recursion(spec.phi, eps)
    return SeriesFrame(y[burn_in:][:n_total], None, spec, overflowed)


def build_supervised(frame: SeriesFrame, n_lags: int) -> SupervisedSet:
    """Lag-expand a series: row t has features (y_{t-1}..y_{t-n_lags}, X_t), target y_t."""
    if n_lags < 0:
        raise ValueError("n_lags must be non-negative")
    n = len(frame)
    if n <= n_lags:
        raise TooShort(f"series of length {n} cannot support {n_lags} lags")
    if n_lags == 0 and frame.X is None:
        raise ValueError("n_lags=0 requires an exogenous matrix")
    cols = [frame.y[n_lags - k : n - k] for k in range(1, n_lags + 1)]
    names = [f"lag{k}" for k in range(1, n_lags + 1)]
    if frame.X is not None:
        cols.extend(frame.X[n_lags:, j] for j in range(frame.X.shape[1]))
        names.extend(f"x{j + 1}" for j in range(frame.X.shape[1]))
    features = np.column_stack(cols) if cols else np.zeros((n - n_lags, 0))
    return SupervisedSet(features, frame.y[n_lags:], tuple(names))


def series_to_csv(frame: SeriesFrame, path) -> None:
    """Write columns t, y, x_1..x_p; the golden-file export format."""
    p = 0 if frame.X is None else frame.X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"] + [f"x_{j + 1}" for j in range(p)])
        for t in range(len(frame)):
            row = [t, repr(float(frame.y[t]))]
            if p:
                row.extend(repr(float(v)) for v in frame.X[t])
            writer.writerow(row)
