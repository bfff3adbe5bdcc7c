"""Gaussian-process regression with shared ARD lengthscales.

Several outputs can be modelled at once over the same inputs. They share
the lengthscales and the noise ratio (one factorisation serves them all)
while each output keeps its own mean, scale and signal variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from ..errors import SingularKernel

JITTER_START = 1e-10
JITTER_MAX = 1e-4
LENGTHSCALE_GRID = tuple(np.geomspace(0.05, 5.0, 9))
NOISE_GRID = (0.0, 1e-6, 1e-4, 1e-2, 1e-1)
_SQRT5 = math.sqrt(5.0)


def _corr(r2: np.ndarray, kernel: str) -> np.ndarray:
    if kernel == "rbf":
        return np.exp(-0.5 * r2)
    r = np.sqrt(np.maximum(r2, 0.0))
    return (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-_SQRT5 * r)


def _scaled_sqdist(A: np.ndarray, B: np.ndarray, ls: np.ndarray) -> np.ndarray:
    a = A / ls
    b = B / ls
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


@dataclass(frozen=True)
class GpOptions:
    kernel: str = "matern52"          # or "rbf"
    fit: bool = True                  # maximise the marginal likelihood
    lengthscales: Sequence[float] | float | None = None   # used when fit is False, or as a warm start
    noise: float | None = None        # noise/signal variance ratio; None lets the fit choose
    signal_variance: float | None = None  # None profiles it per output
    normalize: bool = True
    n_starts: int = 5
    passes: int = 1
    max_fit_points: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in ("matern52", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


def _factor(R: np.ndarray, nugget: float) -> tuple[np.ndarray, float]:
    """Cholesky of R + (nugget + jitter) I with escalating jitter."""
    jitter = JITTER_START
    eye = np.eye(len(R))
    while True:
        try:
            return cholesky(R + (nugget + jitter) * eye, lower=True, check_finite=False), jitter
        except LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise SingularKernel("kernel matrix not positive definite at maximum jitter")


def _lml(L: np.ndarray, Y: np.ndarray, sigma2: float | None) -> float:
    n = len(Y)
    Z = solve_triangular(L, Y, lower=True, check_finite=False)
    quad = (Z * Z).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    if sigma2 is None:
        s2 = np.maximum(quad / n, 1e-300)
        per = -0.5 * n * np.log(s2) - 0.5 * logdet - 0.5 * n * (1.0 + math.log(2 * math.pi))
    else:
        per = -0.5 * quad / sigma2 - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi * sigma2)
    return float(per.sum())


@dataclass
class GpModel:
    X: np.ndarray
    Y: np.ndarray                   # standardised targets, n x k
    y_mean: np.ndarray
    y_scale: np.ndarray
    lengthscales: np.ndarray
    noise: float
    jitter: float
    sigma2: np.ndarray              # per-output signal variance (standardised units)
    kernel: str
    L: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    lml: float = float("nan")
    single: bool = False

    @property
    def n(self) -> int:
        return len(self.X)

    def predict(self, Xs, return_std: bool = True):
        """Posterior mean and latent standard deviation in target units."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = _corr(_scaled_sqdist(Xs, self.X, self.lengthscales), self.kernel)
        mu = Ks @ self.alpha
        mean = mu * self.y_scale + self.y_mean
        if not return_std:
            return mean[:, 0] if self.single else mean
        V = solve_triangular(self.L, Ks.T, lower=True, check_finite=False)
        unit = np.maximum(1.0 - (V * V).sum(axis=0), 0.0)
        std = np.sqrt(unit[:, None] * self.sigma2[None, :]) * self.y_scale
        if self.single:
            return mean[:, 0], std[:, 0]
        return mean, std

    def condition(self, X, Y) -> "GpModel":
        """Same hyperparameters, new data."""
        opts = GpOptions(kernel=self.kernel, fit=False, lengthscales=self.lengthscales,
                         noise=self.noise, signal_variance=None)
        return gp_fit(X, Y, opts)


def _standardize(Y: np.ndarray, normalize: bool):
    if not normalize:
        return Y.copy(), np.zeros(Y.shape[1]), np.ones(Y.shape[1])
    mean = Y.mean(axis=0)
    scale = Y.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (Y - mean) / scale, mean, scale


def _coordinate_search(X: np.ndarray, Ys: np.ndarray, opts: GpOptions,
                       warm: np.ndarray | None) -> tuple[np.ndarray, float]:
    n, d = X.shape
    D = (X[:, None, :] - X[None, :, :]) ** 2           # n x n x d
    grid = np.asarray(LENGTHSCALE_GRID)
    noises = (opts.noise,) if opts.noise is not None else NOISE_GRID
    rng = np.random.default_rng(opts.seed)

    def score(r2, g):
        try:
            L, _ = _factor(_corr(r2, opts.kernel), g)
        except SingularKernel:
            return -math.inf
        return _lml(L, Ys, opts.signal_variance)

    starts = [np.full(d, 0.5)]
    if warm is not None:
        starts.append(np.asarray(warm, dtype=float).copy())
    while len(starts) < opts.n_starts:
        starts.append(rng.choice(grid, size=d))

    best = (-math.inf, starts[0], noises[0])
    for ls in starts:
        ls = ls.copy()
        r2 = (D / ls ** 2).sum(axis=2)
        g = noises[min(1, len(noises) - 1)]
        cur = score(r2, g)
        for _ in range(opts.passes):
            for k in range(d):
                base = r2 - D[:, :, k] / ls[k] ** 2
                for v in grid:
                    if v == ls[k]:
                        continue
                    cand = base + D[:, :, k] / v ** 2
                    s = score(cand, g)
                    if s > cur:
                        cur, ls[k], r2 = s, v, cand
                        base = r2 - D[:, :, k] / ls[k] ** 2
            for gv in noises:
                if gv == g:
                    continue
                s = score(r2, gv)
                if s > cur:
                    cur, g = s, gv
        if cur > best[0]:
            best = (cur, ls.copy(), g)
    return best[1], best[2]


def gp_fit(X, y, options: GpOptions | None = None, fit_subset: Sequence[int] | None = None
           ) -> GpModel:
    """Fit a GP to ``X`` (n x d, unit cube) and targets ``y`` (n or n x k).

    Hyperparameters are picked by coordinate search on the log marginal
    likelihood over :data:`LENGTHSCALE_GRID` and :data:`NOISE_GRID`, from
    ``n_starts`` starting points, using at most ``max_fit_points`` rows
    (``fit_subset`` chooses them). The final model conditions on all rows.
    """
    opts = options or GpOptions()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = y.reshape(len(y), -1)
    if len(X) < 2 or len(X) != len(Y):
        raise ValueError("gp_fit needs at least two rows and matching targets")
    if not np.isfinite(Y).all():
        raise ValueError("targets must be finite")
    Ys, mean, scale = _standardize(Y, opts.normalize)
    d = X.shape[1]

    warm = None
    if opts.lengthscales is not None:
        warm = np.broadcast_to(np.asarray(opts.lengthscales, dtype=float), (d,)).copy()
    if opts.fit:
        idx = np.arange(len(X)) if fit_subset is None else np.asarray(fit_subset)
        idx = idx[: opts.max_fit_points]
        ls, g = _coordinate_search(X[idx], Ys[idx], opts, warm)
    else:
        ls = warm if warm is not None else np.full(d, 0.5)
        g = opts.noise if opts.noise is not None else 0.0

    R = _corr(_scaled_sqdist(X, X, ls), opts.kernel)
    np.fill_diagonal(R, 1.0)
    L, jitter = _factor(R, g)
    alpha = cho_solve((L, True), Ys, check_finite=False)
    if opts.signal_variance is None:
        Z = solve_triangular(L, Ys, lower=True, check_finite=False)
        sigma2 = np.maximum((Z * Z).sum(axis=0) / len(X), 1e-12)
    else:
        sigma2 = np.full(Ys.shape[1], float(opts.signal_variance))
    return GpModel(X, Ys, mean, scale, np.asarray(ls, dtype=float), float(g), jitter, sigma2,
                   opts.kernel, L, alpha, _lml(L, Ys, opts.signal_variance), single)
