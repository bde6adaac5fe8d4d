"""Projected L-BFGS with Armijo backtracking on box-constrained coordinates."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controls import ControlParameterization
from .model import MHZ


@dataclass
class OptimizerConfig:
    history_size: int = 10
    max_iters: int = 1000
    tol_estimate: float = 1e-3
    tol_gradnorm: float = 1e-8
    box_bound_mhz: float = 25.0
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    max_trials: int = 30
    seed: int = 0
    init_amplitude_mhz: float = 10.0

    def __post_init__(self):
        if min(self.tol_estimate, self.tol_gradnorm, self.box_bound_mhz) <= 0:
            raise ValueError("tolerances and box bound must be positive")
        if self.init_amplitude_mhz > self.box_bound_mhz:
            raise ValueError("initial amplitude exceeds the box bound")

    @property
    def box_bound(self) -> float:
        """Box half-width in rad/ns."""
        return MHZ * self.box_bound_mhz


@dataclass
class IterationRecord:
    iter: int
    objective: float
    generalized_infidelity: float
    penalty_value: float
    rollout_estimate: float
    projected_gradnorm: float
    step_length: float
    walltime_s: float


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    status: str
    iterations: int
    info: object
    history: list[IterationRecord] = field(default_factory=list)


def random_init_alpha(param: ControlParameterization, seed: int, amplitude_mhz: float) -> np.ndarray:
    a = MHZ * amplitude_mhz
    return np.random.default_rng(seed).uniform(-a, a, param.total_params)


def _two_loop(g, S, Y):
    q = g.copy()
    rhos = [1.0 / (y @ s) for s, y in zip(S, Y)]
    alphas = []
    for s, y, rho in zip(reversed(S), reversed(Y), reversed(rhos)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y, rho), a in zip(zip(S, Y, rhos), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(fun: Callable, x0, config: OptimizerConfig, lower=None, upper=None,
             stop: Callable | None = None, callback: Callable | None = None) -> OptimizeResult:
    """Minimize ``fun`` over the box lower <= x <= upper.

    ``fun(x)`` returns (value, gradient, info). ``stop(info)`` ends the run
    with status "converged" when it returns True. Bounds may contain infinite
    entries for unconstrained coordinates.
    """
    x = np.asarray(x0, dtype=float).copy()
    lo = np.full_like(x, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full_like(x, np.inf) if upper is None else np.asarray(upper, dtype=float)
    proj = lambda z: np.minimum(np.maximum(z, lo), hi)  # noqa: E731
    x = proj(x)
    f, g, info = fun(x)
    S: deque = deque(maxlen=config.history_size)
    Y: deque = deque(maxlen=config.history_size)
    history: list[IterationRecord] = []
    t0 = time.perf_counter()
    step = 0.0
    failed_once = False
    status = "max_iters"
    it = 0
    for it in range(config.max_iters + 1):
        pg = x - proj(x - g)
        pgnorm = float(np.max(np.abs(pg))) if pg.size else 0.0
        rec = IterationRecord(
            it, float(f),
            getattr(info, "generalized_infidelity", np.nan),
            getattr(info, "penalty_value", np.nan),
            getattr(info, "rollout_estimate", np.nan),
            pgnorm, step, time.perf_counter() - t0)
        history.append(rec)
        if callback is not None:
            callback(rec)
        if stop is not None and stop(info):
            status = "converged"
            break
        if pgnorm <= config.tol_gradnorm:
            status = "gradnorm"
            break
        if it == config.max_iters:
            break

        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        gf = np.where(active, 0.0, g)
        d = -_two_loop(gf, list(S), list(Y))
        d[active] = 0.0
        if not d @ g < 0:
            S.clear()
            Y.clear()
            d = -gf
        lam = 1.0 if S else min(1.0, 1.0 / max(np.linalg.norm(gf), 1e-300))

        accepted = False
        for _ in range(config.max_trials):
            xt = proj(x + lam * d)
            ft, gt, it_info = fun(xt)
            if np.isfinite(ft) and ft <= f + config.armijo_c1 * (g @ (xt - x)):
                accepted = True
                break
            lam *= config.shrink
        if not accepted:
            # retry once from steepest descent, then give up
            if failed_once:
                status = "linesearch_failed"
                break
            failed_once = True
            S.clear()
            Y.clear()
            step = 0.0
            continue
        failed_once = False
        s, y = xt - x, gt - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, g, info = xt, ft, gt, it_info
        step = lam
    return OptimizeResult(x, float(f), status, history[-1].iter, info, history)
