"""Multiple-shooting variables, packing and the sequential adjoint gradient."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objective import (
    ObjectiveReport, Regularization, constraint_violation, frob_inner,
    generalized_infidelity, make_report, penalty_objective, regularization_terms,
)
from .propagation import Propagator

# dP/dW^m = mu (W^m - U^m) + W_ADJOINT_FACTOR * Lambda^{m+1}(t_m), fixed by finite differences
W_ADJOINT_FACTOR = -2.0


@dataclass
class ShootingProblem:
    prop: Propagator
    target: np.ndarray
    mu: float
    reg: Regularization = field(default_factory=Regularization)
    sigma: float = 0.1

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("penalty coefficient mu must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def n(self) -> int:
        return self.prop.dim

    @property
    def num_windows(self) -> int:
        return self.prop.grid.num_windows

    @property
    def num_alpha(self) -> int:
        return self.prop.param.total_params

    @property
    def size(self) -> int:
        return self.num_alpha + 2 * self.n**2 * (self.num_windows - 1)


@dataclass
class ShootingVariables:
    alpha: np.ndarray
    windows: list[np.ndarray]     # initial states of windows 1..M-1


def pack(problem: ShootingProblem, vars: ShootingVariables) -> np.ndarray:
    n, s = problem.n, problem.sigma
    if len(vars.alpha) != problem.num_alpha or len(vars.windows) != problem.num_windows - 1:
        raise ValueError("shooting variables do not match the problem layout")
    parts = [np.asarray(vars.alpha, dtype=float)]
    for W in vars.windows:
        if W.shape != (n, n):
            raise ValueError(f"intermediate state must be {n}x{n}")
        parts.append(s * W.real.ravel())
        parts.append(s * W.imag.ravel())
    return np.concatenate(parts)


def unpack(problem: ShootingProblem, x) -> ShootingVariables:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.size,):
        raise ValueError(f"packed vector has length {x.size}, expected {problem.size}")
    d, n, s = problem.num_alpha, problem.n, problem.sigma
    alpha = x[:d].copy()
    windows = []
    blk = x[d:].reshape(-1, 2, n, n)
    for b in blk:
        windows.append((b[0] + 1j * b[1]) / s)
    return ShootingVariables(alpha, windows)


def pack_gradient(problem: ShootingProblem, g_alpha, g_windows) -> np.ndarray:
    """Gradient in packed coordinates; W entries scale by 1/sigma."""
    s = problem.sigma
    parts = [np.asarray(g_alpha, dtype=float)]
    for G in g_windows:
        parts.append(G.real.ravel() / s)
        parts.append(G.imag.ravel() / s)
    return np.concatenate(parts)


def init_by_rollout(problem: ShootingProblem, alpha0) -> ShootingVariables:
    bnd = problem.prop.rollout_boundaries(alpha0)
    return ShootingVariables(np.array(alpha0, dtype=float), bnd[:-1])


def terminal_conditions(m: int, M: int, U_end, W_next, V, mu: float):
    """Adjoint terminal state at the end of (0-based) window ``m``.

    ``W_next`` is ignored for the final window.
    """
    if m < M - 1:
        return 0.5 * mu * (W_next - U_end)
    n = V.shape[0]
    return (frob_inner(V, U_end) * V - n * U_end) / n**2


def assemble_gradient(problem: ShootingProblem, vars: ShootingVariables):
    """Objective report and real gradient blocks, computed window by window.

    Returns (report, grad_alpha, grad_windows) where grad_windows[i] holds
    dP/dRe W + i dP/dIm W for the i-th intermediate state.
    """
    prop, V, mu = problem.prop, problem.target, problem.mu
    M, n = problem.num_windows, problem.n
    alpha = np.asarray(vars.alpha, dtype=float)
    starts = [np.eye(n, dtype=complex)] + list(vars.windows)
    fwd = [prop.propagate_window(starts[m], m, alpha, store=True) for m in range(M)]

    sq = []
    for m in range(M - 1):
        C, _ = constraint_violation(fwd[m].final, starts[m + 1])
        sq.append(float(np.vdot(C, C).real))
    J = generalized_infidelity(fwd[-1].final, V)

    g_alpha = np.zeros_like(alpha)
    lam_start = [None] * M
    for m in range(M):
        W_next = starts[m + 1] if m < M - 1 else None
        L_T = terminal_conditions(m, M, fwd[m].final, W_next, V, mu)
        lam_start[m], ga = prop.propagate_adjoint_window(L_T, fwd[m])
        g_alpha += ga

    g_windows = []
    for i in range(1, M):
        local = mu * (starts[i] - fwd[i - 1].final)
        g_windows.append(local + W_ADJOINT_FACTOR * lam_start[i])

    tik, en, g_reg = regularization_terms(prop, alpha, problem.reg)
    report = make_report(J, sq, n, mu, tik, en)
    return report, g_alpha + g_reg, g_windows


def packed_objective(problem: ShootingProblem, x) -> float:
    v = unpack(problem, x)
    return penalty_objective(problem.prop, problem.target, v.alpha, v.windows,
                             problem.mu, problem.reg).total


def packed_gradient(problem: ShootingProblem, x):
    v = unpack(problem, x)
    report, ga, gw = assemble_gradient(problem, v)
    return report, pack_gradient(problem, ga, gw)
