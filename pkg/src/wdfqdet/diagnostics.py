"""Gaussian statistics of shared/specific feature populations.

These are measurements only; none of them enters the training objective.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, StatisticsError

COV_EPS = 1e-8


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray  # (C,)
    cov: np.ndarray   # (C, C)

    @property
    def dim(self):
        return self.mean.shape[0]


def fit_gaussian(features):
    """Per-channel mean and sample covariance over batch and spatial positions."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"fit_gaussian expects (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape
    samples = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    if samples.shape[0] < 2:
        raise StatisticsError(f"need at least 2 samples per channel, got {samples.shape[0]}")
    mu = samples.mean(axis=0)
    centred = samples - mu
    cov = centred.T @ centred / (samples.shape[0] - 1)
    return GaussianFit(mu, 0.5 * (cov + cov.T))


def _check(p, q):
    if p.dim != q.dim:
        raise DimensionError(f"Gaussian dimensions differ: {p.dim} vs {q.dim}")


def regularised(cov):
    """Add eps*I only when ``cov`` is singular or nearly so."""
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= COV_EPS * max(1.0, abs(eig[-1])):
        return cov + COV_EPS * np.eye(cov.shape[0])
    return cov


def kl_gaussian(p, q):
    """KL(p || q) for multivariate normals."""
    _check(p, q)
    k = p.dim
    sp, sq = regularised(p.cov), regularised(q.cov)
    try:
        lp = np.linalg.cholesky(sp)
        lq = np.linalg.cholesky(sq)
    except np.linalg.LinAlgError:
        raise NumericError("regularised covariance is not positive definite") from None
    diff = q.mean - p.mean
    maha = diff @ np.linalg.solve(sq, diff)
    logdet = 2.0 * (np.log(np.diag(lq)).sum() - np.log(np.diag(lp)).sum())
    return 0.5 * (np.trace(np.linalg.solve(sq, sp)) + maha - k + logdet)


def mean_gap(p, q):
    _check(p, q)
    d = p.mean - q.mean
    return float(d @ d)


def trace_orth(p, q):
    _check(p, q)
    return float(np.trace(p.cov @ q.cov.T))


def level_report(low_ir, low_rgb, high_ir, high_rgb):
    """Diagnostic numbers for one pyramid level."""
    lp, lq = fit_gaussian(low_ir), fit_gaussian(low_rgb)
    hp, hq = fit_gaussian(high_ir), fit_gaussian(high_rgb)
    return {
        "mean_gap": mean_gap(lp, lq),
        "kl_low": float(kl_gaussian(lp, lq)),
        "kl_high": float(kl_gaussian(hp, hq)),
        "trace_orth_high": trace_orth(hp, hq),
    }
