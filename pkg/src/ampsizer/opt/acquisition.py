"""Expected improvement and feasibility weighting (maximisation)."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, erfcx, log_ndtr

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_LOG_INV_SQRT2PI = math.log(_INV_SQRT2PI)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)


def norm_cdf(z):
    return 0.5 * (1.0 + erf(np.asarray(z, dtype=float) * _INV_SQRT2))


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT2PI * np.exp(-0.5 * z * z)


def expected_improvement(mean, std, incumbent):
    """(mu - f*) Phi(z) + sigma phi(z); sigma = 0 gives max(mu - f*, 0)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    diff = mean - incumbent
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, diff / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(std > 0, diff * norm_cdf(z) + std * norm_pdf(z), np.maximum(diff, 0.0))
    ei = np.maximum(ei, 0.0)
    return ei if ei.ndim else float(ei)


def log_expected_improvement(mean, std, incumbent):
    """log EI, accurate far into the lower tail where EI itself underflows."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.atleast_1d(np.asarray(std, dtype=float))
    out = np.full(mean.shape, -np.inf)
    pos = std > 0
    z = (mean[pos] - incumbent) / std[pos]
    h = np.empty_like(z)
    mid = z > -1.0
    zm = z[mid]
    h[mid] = np.log(zm * norm_cdf(zm) + norm_pdf(zm))
    # phi(z) + z Phi(z) = phi(z) (1 + z Phi(z)/phi(z)), the ratio via the scaled erfc
    tail = ~mid & (z > -1e6)
    zt = z[tail]
    h[tail] = _LOG_INV_SQRT2PI - 0.5 * zt * zt + np.log1p(zt * _SQRT_HALF_PI * erfcx(-zt * _INV_SQRT2))
    far = z <= -1e6
    zf = z[far]
    h[far] = _LOG_INV_SQRT2PI - 0.5 * zf * zf - 2.0 * np.log(-zf)
    out[pos] = np.log(std[pos]) + h
    zero = ~pos & (mean > incumbent)
    out[zero] = np.log(mean[zero] - incumbent)
    return out


def log_prob_satisfied(mean, std, threshold=0.0):
    """log P(g <= threshold) for Gaussian g, summed over the last axis."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    thr = np.broadcast_to(np.asarray(threshold, dtype=float), mean.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, (thr - mean) / np.where(std > 0, std, 1.0),
                     np.where(mean <= thr, np.inf, -np.inf))
    lp = log_ndtr(z)
    return lp.sum(axis=-1) if lp.ndim > 1 else lp


def constrained_log_acquisition(obj_mean, obj_std, incumbent, con_mean, con_std, threshold=0.0):
    """log(EI x prod P(feasible)); with no incumbent, log prod P(feasible)."""
    lp = log_prob_satisfied(con_mean, con_std, threshold) if np.size(con_mean) else 0.0
    if incumbent is None:
        return np.broadcast_to(lp, np.shape(obj_mean)).astype(float)
    return log_expected_improvement(obj_mean, obj_std, incumbent) + lp
