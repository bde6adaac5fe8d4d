import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msqoc.model import qft_target
from msqoc.objective import (
    Regularization, constraint_violation, generalized_infidelity, penalty_objective,
    qv_matrix, qv_quadratic_form, rollout_estimate, trace_infidelity,
)
from msqoc.optimizer import random_init_alpha
from msqoc.shooting import init_by_rollout

from conftest import infeasible_point, random_complex, random_unitary

V4 = qft_target(4)
seeds = st.integers(0, 2**32 - 1)


def test_trace_infidelity_examples():
    assert trace_infidelity(V4, V4) == pytest.approx(0, abs=1e-15)
    assert trace_infidelity(np.exp(0.7j) * V4, V4) == pytest.approx(0, abs=1e-15)
    assert trace_infidelity(np.diag([1.0, -1.0]), np.eye(2)) == 1.0


def test_generalized_infidelity_examples():
    assert generalized_infidelity(V4, V4) == pytest.approx(0, abs=1e-15)
    assert generalized_infidelity(np.zeros((4, 4)), V4) == 0
    assert generalized_infidelity(np.diag([1.0, -1.0]), np.eye(2)) == 1.0


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_generalized_nonnegative(seed):
    U = random_complex(np.random.default_rng(seed), (4, 4))
    assert generalized_infidelity(U, V4) >= -1e-12


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_generalized_equals_trace_on_unitaries(seed):
    U = random_unitary(np.random.default_rng(seed), 4)
    assert abs(generalized_infidelity(U, V4) - trace_infidelity(U, V4)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0, 1))
def test_generalized_convex(seed, lam):
    rng = np.random.default_rng(seed)
    U1, U2 = random_complex(rng, (4, 4)), random_complex(rng, (4, 4))
    lhs = generalized_infidelity(lam * U1 + (1 - lam) * U2, V4)
    rhs = lam * generalized_infidelity(U1, V4) + (1 - lam) * generalized_infidelity(U2, V4)
    assert lhs <= rhs + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_generalized_zero_set(beta):
    assert abs(generalized_infidelity(beta * V4, V4)) <= 1e-12 * max(1, abs(beta) ** 2)


def test_quadratic_form_agrees():
    rng = np.random.default_rng(0)
    diffs = [abs(qv_quadratic_form(U, V4) - generalized_infidelity(U, V4))
             for U in (random_complex(rng, (4, 4)) for _ in range(100))]
    assert max(diffs) <= 1e-12


def test_qv_spectrum_and_kernel():
    Q = qv_matrix(V4)
    ev = np.sort(np.linalg.eigvalsh(Q))
    assert abs(ev[0]) <= 1e-12
    np.testing.assert_allclose(ev[1:], 1.0, atol=1e-12)
    assert np.linalg.norm(Q @ V4.reshape(-1, order="F")) <= 1e-12


def test_constraint_violation_examples():
    rng = np.random.default_rng(1)
    U = random_complex(rng, (4, 4))
    assert constraint_violation(U, U)[1] == 0
    assert constraint_violation(U + 1e-3 * np.eye(4), U)[1] == pytest.approx(1e-3 * 2, rel=1e-9)
    W = random_complex(rng, (4, 4))
    C, norm = constraint_violation(U, W)
    assert norm == pytest.approx(np.sqrt(sum(abs(x) ** 2 for x in (U - W).ravel())), rel=1e-14)


def test_rollout_estimate_examples():
    assert rollout_estimate(0.3, [0.0, 0.0], 4) == 0.3
    assert rollout_estimate(0.0, [0.2], 4) == pytest.approx(0.04 / 4)


def test_rollout_estimate_bounds_true_infidelity(qft4_problem4):
    pb = qft4_problem4
    worst = -np.inf
    for seed in range(100):
        vars = infeasible_point(pb, seed, scale=0.02 * (1 + seed % 5))
        rep = penalty_objective(pb.prop, pb.target, vars.alpha, vars.windows, pb.mu)
        true = generalized_infidelity(pb.prop.rollout(vars.alpha), pb.target)
        worst = max(worst, true - rep.rollout_estimate)
    assert worst <= 1e-10


def test_single_window_has_no_penalty(qft4_config):
    pb = qft4_config.problem(windows=1)
    alpha = random_init_alpha(pb.prop.param, 0, 10.0)
    rep = penalty_objective(pb.prop, pb.target, alpha, [], pb.mu, pb.reg)
    J = generalized_infidelity(pb.prop.rollout(alpha), pb.target)
    assert rep.penalty_value == 0 and rep.constraint_norms == []
    assert rep.total == pytest.approx(J + rep.tikhonov + rep.energy, rel=1e-15)


@pytest.mark.parametrize("M", [2, 4, 8])
def test_feasible_point_matches_single_window(qft4_config, M):
    steps = 2256   # common multiple of 1, 2, 4 and 8 windows
    alpha = random_init_alpha(qft4_config.parameterization(), 3, 10.0)
    ref_pb = qft4_config.problem(windows=1, total_steps=steps)
    ref = penalty_objective(ref_pb.prop, ref_pb.target, alpha, [], ref_pb.mu, ref_pb.reg)
    pb = qft4_config.problem(windows=M, total_steps=steps)
    vars = init_by_rollout(pb, alpha)
    rep = penalty_objective(pb.prop, pb.target, alpha, vars.windows, pb.mu, pb.reg)
    assert rep.penalty_value == 0
    assert abs(rep.total - ref.total) <= 1e-12


def test_penalty_objective_matches_bruteforce(qft4_problem4):
    pb = qft4_problem4
    vars = infeasible_point(pb, 11)
    rep = penalty_objective(pb.prop, pb.target, vars.alpha, vars.windows, pb.mu, pb.reg)
    starts = [np.eye(4)] + vars.windows
    ends = [pb.prop.propagate_window(starts[m], m, vars.alpha).final for m in range(4)]
    pen = sum(0.5 * pb.mu * np.linalg.norm(ends[m] - vars.windows[m]) ** 2 for m in range(3))
    a = vars.alpha
    expected = (generalized_infidelity(ends[-1], pb.target) + pen
                + pb.reg.tikhonov * np.sum(a * a) + rep.energy)
    assert rep.total == pytest.approx(expected, abs=1e-14)


def test_regularization_defaults(qft4_config):
    pb = qft4_config.problem()
    assert pb.reg == Regularization(1e-3 / pb.num_alpha, 1e-3)
    assert pb.mu == 0.5
