"""Bayesian optimisation with feasibility-weighted expected improvement.

One GP models the objective and one GP per constraint models its signed
margin (negative means satisfied). All of them share the kernel
hyperparameters so a single factorisation serves every output. Targets are
passed through ``sign(v) * log1p(|v|)`` first, which keeps the sign of a
margin and tames the orders-of-magnitude spread of amplifier figures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .acquisition import constrained_log_acquisition
from .common import OptimizeResult, Recorder, check_budget
from .gp import GpModel, GpOptions, gp_fit


@dataclass(frozen=True)
class BoParams:
    n_init: int | None = None          # None: 2d + 1
    probes: int = 1000
    probes_near_best: int = 200        # part of ``probes`` drawn around the best designs
    near_best_sigma: float = 0.1
    local_starts: int = 5
    local_steps: tuple[tuple[float, int], ...] = ((0.05, 50), (0.01, 50))
    max_points: int = 200              # rows the posterior conditions on
    fit_points: int = 150              # rows used to choose hyperparameters
    refit_growth: float = 1.25         # refit when the data grows by this factor
    kernel: str = "matern52"
    n_starts: int = 5


def _squash(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.log1p(np.abs(v))


class _History:
    """Array view of the log, extended incrementally."""

    def __init__(self):
        self.u, self.obj, self.mar, self.ok, self.feas, self.viol = [], [], [], [], [], []

    def sync(self, log) -> None:
        for e in log[len(self.u):]:
            o = e.outcome
            self.u.append(e.u)
            self.obj.append(float(o.objective))
            self.mar.append(o.margins)
            self.ok.append(o.status.value == "Ok")
            self.feas.append(o.feasible)
            self.viol.append(o.total_violation)

    def targets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        U = np.array(self.u)
        obj = np.array(self.obj)
        mar = np.array(self.mar, dtype=float).reshape(len(U), -1)
        ok = np.array(self.ok) & np.isfinite(obj)
        # failed designs take the worst value seen among the ones that ran
        if ok.any():
            obj = np.where(ok, obj, obj[ok].min())
            mar = np.where(ok[:, None], mar, mar[ok].max(axis=0)[None, :])
        else:
            obj = np.zeros(len(U))
            mar = np.ones_like(mar)
        return U, _squash(obj), _squash(mar)

    def rank(self) -> np.ndarray:
        """Feasibility-first order, best first, stable."""
        feas = np.array(self.feas)
        obj = np.array(self.obj)
        key2 = np.where(feas, -obj, np.array(self.viol))
        return np.lexsort((np.arange(len(feas)), key2, ~feas))

    def subset(self, limit: int) -> np.ndarray:
        n = len(self.u)
        if n <= limit:
            return np.arange(n)
        order = self.rank()
        top = order[: limit // 2]
        U = np.array(self.u)
        rest = order[limit // 2:]
        dist = ((U[rest] - U[order[0]]) ** 2).sum(axis=1)
        near = rest[np.argsort(dist, kind="stable")[: limit - len(top)]]
        return np.sort(np.concatenate([top, near]))

    def incumbent(self):
        feas = np.array(self.feas)
        if not feas.any():
            return None
        return float(_squash(np.array(self.obj)[feas].max()))


class _Proposer:
    def __init__(self, params: BoParams, rng: np.random.Generator, d: int):
        self.p = params
        self.rng = rng
        self.d = d

    def acquisition(self, model: GpModel, incumbent, U: np.ndarray) -> np.ndarray:
        mean, std = model.predict(U)
        return constrained_log_acquisition(mean[:, 0], std[:, 0], incumbent,
                                           mean[:, 1:], std[:, 1:], 0.0)

    def propose(self, model: GpModel, incumbent, anchors: np.ndarray,
                seen: np.ndarray) -> np.ndarray:
        p, rng, d = self.p, self.rng, self.d
        n_near = min(p.probes_near_best, p.probes) if len(anchors) else 0
        P = rng.random((p.probes - n_near, d))
        if n_near:
            pick = anchors[np.arange(n_near) % len(anchors)]
            P = np.vstack([P, np.clip(pick + p.near_best_sigma * rng.standard_normal((n_near, d)),
                                      0.0, 1.0)])
        a = self.acquisition(model, incumbent, P)
        starts = np.argsort(-a, kind="stable")[: p.local_starts]
        X, v = P[starts].copy(), a[starts].copy()
        k = len(starts)
        for sigma, count in p.local_steps:
            # one batched acquisition call per step for all starts
            C = np.clip(np.repeat(X, count, axis=0)
                        + sigma * rng.standard_normal((k * count, d)), 0.0, 1.0)
            ac = self.acquisition(model, incumbent, C).reshape(k, count)
            j = np.argmax(ac, axis=1)
            top = ac[np.arange(k), j]
            move = top > v
            X[move] = C.reshape(k, count, d)[np.flatnonzero(move), j[move]]
            v[move] = top[move]
        cands, vals = list(X), list(v)
        cands = np.vstack(cands + [P])
        vals = np.concatenate([np.asarray(vals), a])
        for j in np.argsort(-vals, kind="stable"):
            if not (np.abs(seen - cands[j]).max(axis=1) < 1e-12).any():
                return cands[j]
        return rng.random(d)


def bo_optimize(recorder: Recorder, seed: int, params: BoParams = BoParams()) -> OptimizeResult:
    d = len(recorder.space)
    n_init = params.n_init or 2 * d + 1
    check_budget(recorder, n_init, "Bayesian optimisation")
    rng = np.random.default_rng(seed)
    init = qmc.LatinHypercube(d=d, seed=rng).random(n_init)
    for x in init:
        recorder.evaluate(x)

    proposer = _Proposer(params, rng, d)
    hist = _History()
    model = None
    next_fit = 0
    while recorder.remaining > 0:
        hist.sync(recorder.log)
        U, y, M = hist.targets()
        Y = np.column_stack([y, M])
        idx = hist.subset(params.max_points)
        n = recorder.used
        if model is None or n >= next_fit:
            fit_idx = hist.subset(params.fit_points)
            opts = GpOptions(kernel=params.kernel, n_starts=params.n_starts,
                             max_fit_points=params.fit_points, seed=seed + n,
                             lengthscales=None if model is None else model.lengthscales)
            fitted = gp_fit(U[fit_idx], Y[fit_idx], opts)
            model = fitted.condition(U[idx], Y[idx])
            next_fit = math.ceil(n * params.refit_growth)
        else:
            model = model.condition(U[idx], Y[idx])
        anchors = U[hist.rank()[: params.local_starts]]
        recorder.evaluate(proposer.propose(model, hist.incumbent(), anchors, U))
    return OptimizeResult(recorder.best(), recorder.log)
