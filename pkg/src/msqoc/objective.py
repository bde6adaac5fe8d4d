"""Infidelity measures, the penalty objective and the roll-out estimate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controls import energy_penalty


def frob_inner(A, B) -> complex:
    """<A, B>_F = tr(A^H B)."""
    return complex(np.vdot(A, B))


def trace_infidelity(U, V) -> float:
    n = V.shape[0]
    return 1.0 - abs(frob_inner(V, U)) ** 2 / n**2


def generalized_infidelity(U, V) -> float:
    """||U||^2/n - |<V, U>|^2/n^2; nonnegative and convex for any complex U."""
    n = V.shape[0]
    return float(np.vdot(U, U).real) / n - abs(frob_inner(V, U)) ** 2 / n**2


def qv_matrix(V) -> np.ndarray:
    n = V.shape[0]
    v = V.reshape(-1, order="F")
    return np.eye(n * n) - np.outer(v, v.conj()) / n


def qv_quadratic_form(U, V) -> float:
    """Generalized infidelity evaluated through the explicit n^2 x n^2 matrix."""
    n = V.shape[0]
    u = U.reshape(-1, order="F")
    return float(np.vdot(u, qv_matrix(V) @ u).real) / n


def constraint_violation(U_end, W_next):
    C = np.asarray(U_end) - np.asarray(W_next)
    return C, float(np.linalg.norm(C))


def rollout_estimate(J_final: float, constraint_norms, n: int) -> float:
    """Upper bound on the roll-out infidelity from local window quantities."""
    s = float(sum(constraint_norms))
    J = max(J_final, 0.0)
    return J_final + 2.0 / np.sqrt(n) * np.sqrt(J) * s + s * s / n


@dataclass(frozen=True)
class Regularization:
    tikhonov: float = 0.0
    energy: float = 0.0


@dataclass
class ObjectiveReport:
    generalized_infidelity: float
    penalty_value: float
    constraint_norms: list[float]
    rollout_estimate: float
    tikhonov: float
    energy: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = (self.generalized_infidelity + self.penalty_value
                      + self.tikhonov + self.energy)


def regularization_terms(prop, alpha, reg: Regularization):
    """Tikhonov and pulse-energy values and their gradient in alpha."""
    alpha = np.asarray(alpha, dtype=float)
    tik = reg.tikhonov * float(alpha @ alpha)
    grad = 2.0 * reg.tikhonov * alpha
    en = 0.0
    if reg.energy:
        E, gE = energy_penalty(prop.param, alpha, prop.grid.times())
        en = reg.energy * E
        grad = grad + reg.energy * gE
    return tik, en, grad


def make_report(J: float, sq_norms, n: int, mu: float, tik: float, en: float) -> ObjectiveReport:
    norms = [float(np.sqrt(s)) for s in sq_norms]
    return ObjectiveReport(
        generalized_infidelity=J,
        penalty_value=0.5 * mu * float(sum(sq_norms)),
        constraint_norms=norms,
        rollout_estimate=rollout_estimate(J, norms, n),
        tikhonov=tik,
        energy=en,
    )


def penalty_objective(prop, V, alpha, windows, mu: float,
                      reg: Regularization = Regularization()) -> ObjectiveReport:
    """Sequential evaluation of the multiple-shooting penalty objective.

    ``windows`` holds the initial states of windows 1..M-1; window 0 starts
    from the identity.
    """
    M = prop.grid.num_windows
    if len(windows) != M - 1:
        raise ValueError(f"expected {M - 1} intermediate states, got {len(windows)}")
    n = prop.dim
    starts = [np.eye(n, dtype=complex)] + list(windows)
    sq = []
    U = None
    for m in range(M):
        U = prop.propagate_window(starts[m], m, alpha).final
        if m < M - 1:
            C, _ = constraint_violation(U, starts[m + 1])
            sq.append(float(np.vdot(C, C).real))
    tik, en, _ = regularization_terms(prop, alpha, reg)
    return make_report(generalized_infidelity(U, V), sq, n, mu, tik, en)
