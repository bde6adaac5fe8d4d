"""Carrier-wave controls with quadratic B-spline envelopes.

The parameter vector is laid out per (qubit, carrier) pair: ``d1`` real
coefficients followed by ``d1`` imaginary coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _cardinal_quadratic(u):
    """Cardinal quadratic B-spline on knots 0, 1, 2, 3."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    a = (u >= 0) & (u < 1)
    b = (u >= 1) & (u < 2)
    c = (u >= 2) & (u <= 3)
    out[a] = 0.5 * u[a] ** 2
    out[b] = 0.5 * (-2.0 * u[b] ** 2 + 6.0 * u[b] - 3.0)
    out[c] = 0.5 * (3.0 - u[c]) ** 2
    return out


@dataclass(frozen=True)
class ControlParameterization:
    duration_ns: float
    carriers: tuple[tuple[float, ...], ...]   # rad/ns, per qubit
    knot_spacing_ns: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "carriers",
                           tuple(tuple(float(w) for w in c) for c in self.carriers))
        if self.duration_ns <= 0 or self.knot_spacing_ns <= 0:
            raise ValueError("duration and knot spacing must be positive")

    @property
    def num_intervals(self) -> int:
        return math.ceil(self.duration_ns / self.knot_spacing_ns - 1e-12)

    @property
    def knot_width(self) -> float:
        """Actual knot width; the interval count is rounded up so knots tile [0, T]."""
        return self.duration_ns / self.num_intervals

    @property
    def num_splines(self) -> int:
        return self.num_intervals + 2

    @property
    def num_qubits(self) -> int:
        return len(self.carriers)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """(qubit, carrier) pairs in parameter order."""
        return [(j, f) for j, cs in enumerate(self.carriers) for f in range(len(cs))]

    @property
    def total_params(self) -> int:
        return 2 * self.num_splines * len(self.pairs)

    def index(self, j: int, f: int, s: int, part: str) -> int:
        d1 = self.num_splines
        if not 0 <= s < d1:
            raise IndexError(f"spline index {s} out of range [0, {d1})")
        p = self.pairs.index((j, f))
        return 2 * d1 * p + (0 if part == "re" else d1) + s

    def unindex(self, ell: int) -> tuple[int, int, int, str]:
        d1 = self.num_splines
        if not 0 <= ell < self.total_params:
            raise IndexError(f"parameter index {ell} out of range")
        p, r = divmod(ell, 2 * d1)
        part, s = divmod(r, d1)
        j, f = self.pairs[p]
        return j, f, s, ("re", "im")[part]

    def coefficients(self, alpha) -> np.ndarray:
        """Complex envelope coefficients, shape (num_pairs, d1)."""
        d1 = self.num_splines
        a = np.asarray(alpha, dtype=float).reshape(len(self.pairs), 2, d1)
        return a[:, 0, :] + 1j * a[:, 1, :]

    # -- basis evaluation ------------------------------------------------

    def bspline_basis(self, s: int, t) -> np.ndarray:
        if not 0 <= s < self.num_splines:
            raise IndexError(f"spline index {s} out of range [0, {self.num_splines})")
        return _cardinal_quadratic(np.asarray(t, dtype=float) / self.knot_width - s + 2.0)

    def basis_sparse(self, t):
        """The three splines that are nonzero at each time.

        Returns integer indices and values, both of shape (len(t), 3).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = t / self.knot_width
        i = np.clip(np.floor(x), 0, self.num_intervals - 1).astype(np.int64)
        x = x - i
        idx = i[:, None] + np.arange(3)[None, :]
        val = np.stack([0.5 * (1.0 - x) ** 2,
                        0.5 * (-2.0 * x ** 2 + 2.0 * x + 1.0),
                        0.5 * x ** 2], axis=1)
        return idx, val

    # -- controls ----------------------------------------------------------

    def envelopes(self, t, alpha) -> np.ndarray:
        """Envelope values for every (qubit, carrier) pair, shape (len(t), num_pairs)."""
        idx, val = self.basis_sparse(t)
        coef = self.coefficients(alpha)
        return np.einsum("kc,pkc->kp", val, coef[:, idx])

    def carrier_phases(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        omegas = np.array([self.carriers[j][f] for j, f in self.pairs])
        return np.exp(1j * t[:, None] * omegas[None, :])

    def control_values(self, t, alpha) -> np.ndarray:
        """d_j(t) for all qubits, shape (len(t), q)."""
        terms = self.envelopes(t, alpha) * self.carrier_phases(t)
        out = np.zeros((terms.shape[0], self.num_qubits), dtype=complex)
        for p, (j, _) in enumerate(self.pairs):
            out[:, j] += terms[:, p]
        return out

    def eval_envelope(self, j: int, f: int, t, alpha):
        p = self.pairs.index((j, f))
        return self.envelopes(t, alpha)[:, p]

    def eval_control(self, j: int, t, alpha):
        return self.control_values(t, alpha)[:, j]

    def eval_control_derivative(self, j: int, t, ell: int):
        """Derivative of d_j(t) with respect to parameter ``ell``."""
        jj, f, s, part = self.unindex(ell)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if jj != j:
            return np.zeros(t.shape, dtype=complex)
        val = self.bspline_basis(s, t) * np.exp(1j * t * self.carriers[j][f])
        return 1j * val if part == "im" else val.astype(complex)

    def project_gradient(self, t, idx, val, r_re, r_im) -> np.ndarray:
        """Scatter per-time weights onto parameters.

        ``r_re`` and ``r_im`` have shape (len(t), num_pairs); the result is
        sum_k B_s(t_k) r[k] for each spline s, packed as a parameter vector.
        """
        d1 = self.num_splines
        out = np.empty((len(self.pairs), 2, d1))
        flat = idx.ravel()
        for p in range(len(self.pairs)):
            out[p, 0] = np.bincount(flat, weights=(val * r_re[:, p, None]).ravel(), minlength=d1)[:d1]
            out[p, 1] = np.bincount(flat, weights=(val * r_im[:, p, None]).ravel(), minlength=d1)[:d1]
        return out.ravel()


def trapezoid_weights(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def energy_penalty(param: ControlParameterization, alpha, t):
    """Pulse energy sum_j int |d_j|^2 dt by the trapezoid rule on ``t``, with gradient."""
    t = np.asarray(t, dtype=float)
    w = trapezoid_weights(t)
    d = param.control_values(t, alpha)
    energy = float(np.sum(w[:, None] * np.abs(d) ** 2))
    idx, val = param.basis_sparse(t)
    qubit = [j for j, _ in param.pairs]
    z = np.conj(d[:, qubit]) * param.carrier_phases(t) * w[:, None]
    grad = param.project_gradient(t, idx, val, 2.0 * z.real, -2.0 * z.imag)
    return energy, grad
