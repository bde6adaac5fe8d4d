"""Deterministic task-parallel evaluation over (window, column block) pairs.

Each task propagates a block of columns through one window. Tasks only read
immutable inputs and write their own result slot; every reduction runs in a
fixed (window, block) order on the calling thread, so results do not depend
on the worker count or on completion order.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .objective import frob_inner, make_report, regularization_terms
from .shooting import W_ADJOINT_FACTOR, ShootingProblem, ShootingVariables, init_by_rollout


class TaskError(RuntimeError):
    def __init__(self, window: int, block: int, cause: BaseException):
        super().__init__(f"task (window {window}, block {block}) failed: {cause!r}")
        self.window = window
        self.block = block
        self.__cause__ = cause


@dataclass(frozen=True)
class TaskGrid:
    num_windows: int
    n: int
    block_size: int | None = None

    def __post_init__(self):
        b = self.n if self.block_size is None else self.block_size
        if b < 1 or self.n % b:
            raise ValueError(f"column block size {b} must divide n={self.n}")
        object.__setattr__(self, "block_size", b)

    @property
    def num_blocks(self) -> int:
        return self.n // self.block_size

    def columns(self, block: int) -> slice:
        return slice(block * self.block_size, (block + 1) * self.block_size)

    def tasks(self):
        return [(m, b) for m in range(self.num_windows) for b in range(self.num_blocks)]


def _run(pool, fn, keys):
    """Run fn over keys and return results in key order."""
    def guarded(key):
        try:
            return fn(*key)
        except Exception as exc:  # noqa: BLE001 - re-raised with task identity
            m, b = key if len(key) == 2 else (key[0], -1)
            raise TaskError(m, b, exc) from exc

    if pool is None:
        return [guarded(k) for k in keys]
    futures = [pool.submit(guarded, k) for k in keys]
    return [f.result() for f in futures]


class ParallelEvaluator:
    """Objective and gradient of a shooting problem on a worker pool."""

    def __init__(self, problem: ShootingProblem, workers: int = 1, block_size: int | None = None):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.problem = problem
        self.workers = workers
        self.grid = TaskGrid(problem.num_windows, problem.n, block_size)
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _forward(self, vars: ShootingVariables, store: bool):
        pb, tg = self.problem, self.grid
        prop, n = pb.prop, pb.n
        alpha = np.asarray(vars.alpha, dtype=float)
        starts = [np.eye(n, dtype=complex)] + list(vars.windows)
        factors = _run(self._pool, lambda m: prop.cayley_factors(alpha, m),
                       [(m,) for m in range(tg.num_windows)])

        def fwd(m, b):
            cols = tg.columns(b)
            return prop.propagate_window(starts[m][:, cols], m, alpha, store=store,
                                         factors=factors[m])

        results = _run(self._pool, fwd, tg.tasks())
        by_key = dict(zip(tg.tasks(), results))
        return alpha, starts, by_key

    def _reduce(self, alpha, starts, by_key):
        """Ordered reduction of per-task partials into the objective report."""
        pb, tg = self.problem, self.grid
        M, n, V = tg.num_windows, pb.n, pb.target
        sq = []
        for m in range(M - 1):
            parts = []
            for b in range(tg.num_blocks):
                C = by_key[m, b].final - starts[m + 1][:, tg.columns(b)]
                parts.append(float(np.vdot(C, C).real))
            sq.append(_ordered_sum(parts))
        norm2 = _ordered_sum([float(np.vdot(by_key[M - 1, b].final, by_key[M - 1, b].final).real)
                              for b in range(tg.num_blocks)])
        gamma = _ordered_sum([frob_inner(V[:, tg.columns(b)], by_key[M - 1, b].final)
                              for b in range(tg.num_blocks)])
        J = norm2 / n - abs(gamma) ** 2 / n**2
        tik, en, g_reg = regularization_terms(pb.prop, alpha, pb.reg)
        return make_report(J, sq, n, pb.mu, tik, en), gamma, g_reg

    def objective(self, vars: ShootingVariables):
        alpha, starts, by_key = self._forward(vars, store=False)
        report, _, _ = self._reduce(alpha, starts, by_key)
        return report

    def gradient(self, vars: ShootingVariables):
        """Returns (report, grad_alpha, grad_windows) like shooting.assemble_gradient."""
        pb, tg = self.problem, self.grid
        M, n, V, mu = tg.num_windows, pb.n, pb.target, pb.mu
        alpha, starts, by_key = self._forward(vars, store=True)
        report, gamma, g_reg = self._reduce(alpha, starts, by_key)

        def adj(m, b):
            cols = tg.columns(b)
            U = by_key[m, b].final
            if m < M - 1:
                L_T = 0.5 * mu * (starts[m + 1][:, cols] - U)
            else:
                L_T = (gamma * V[:, cols] - n * U) / n**2
            return pb.prop.propagate_adjoint_window(L_T, by_key[m, b])

        adjoint = dict(zip(tg.tasks(), _run(self._pool, adj, tg.tasks())))

        g_alpha = np.zeros_like(alpha)
        for key in tg.tasks():
            g_alpha += adjoint[key][1]
        g_windows = []
        for i in range(1, M):
            G = np.empty((n, n), dtype=complex)
            for b in range(tg.num_blocks):
                cols = tg.columns(b)
                local = mu * (starts[i][:, cols] - by_key[i - 1, b].final)
                G[:, cols] = local + W_ADJOINT_FACTOR * adjoint[i, b][0]
            g_windows.append(G)
        return report, g_alpha + g_reg, g_windows


def _ordered_sum(values):
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total


def evaluate_objective_parallel(problem, vars, workers: int = 1, block_size=None):
    with ParallelEvaluator(problem, workers, block_size) as ev:
        return ev.objective(vars)


def evaluate_gradient_parallel(problem, vars, workers: int = 1, block_size=None):
    with ParallelEvaluator(problem, workers, block_size) as ev:
        return ev.gradient(vars)


BENCHMARK_COLUMNS = ("testcase", "M", "workers", "grad_walltime_s", "speedup")


def benchmark_gradient(make_problem, testcase: str, window_counts, worker_counts,
                       repeats: int = 3, seed: int = 0):
    """Time one gradient per (M, workers) pair.

    ``make_problem(M)`` builds the shooting problem for M windows; all grids
    must share the same total step count. Speedups are relative to the
    M=1, workers=1 run, which is always measured.
    """
    rows = []
    base = None
    pairs = [(M, w) for M in window_counts for w in worker_counts]
    if (1, 1) not in pairs:
        pairs = [(1, 1)] + pairs
    for M, w in pairs:
        pb = make_problem(M)
        rng = np.random.default_rng(seed)
        alpha = rng.uniform(-1, 1, pb.num_alpha) * 2 * np.pi * 0.01
        vars = init_by_rollout(pb, alpha)
        with ParallelEvaluator(pb, w) as ev:
            ev.gradient(vars)  # warm-up, includes kernel compilation on first use
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                ev.gradient(vars)
                best = min(best, time.perf_counter() - t0)
        if (M, w) == (1, 1):
            base = best
        rows.append({"testcase": testcase, "M": M, "workers": w, "grad_walltime_s": best})
    for r in rows:
        r["speedup"] = base / r["grad_walltime_s"]
    requested = set((M, w) for M in window_counts for w in worker_counts)
    return [r for r in rows if (r["M"], r["workers"]) in requested]
