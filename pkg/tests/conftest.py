import numpy as np
import pytest

from msqoc.config import make_config
from msqoc.optimizer import random_init_alpha
from msqoc.shooting import init_by_rollout


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_unitary(rng, n):
    Q, R = np.linalg.qr(random_complex(rng, (n, n)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def expm_hermitian(H, t):
    """exp(-i H t) through the eigendecomposition of a Hermitian matrix."""
    w, Q = np.linalg.eigh(H)
    return (Q * np.exp(-1j * w * t)) @ Q.conj().T


def infeasible_point(problem, seed, scale=0.05):
    """Random controls with roll-out states perturbed off the feasible set."""
    rng = np.random.default_rng(seed)
    alpha = random_init_alpha(problem.prop.param, seed, 10.0)
    vars = init_by_rollout(problem, alpha)
    vars.windows = [W + random_complex(rng, W.shape, scale) for W in vars.windows]
    return vars


@pytest.fixture(scope="session")
def qft4_config():
    return make_config("qft4")


@pytest.fixture(scope="session")
def qft4_problem4(qft4_config):
    """QFT-4 preset on the tabulated grid with four windows."""
    return qft4_config.problem(windows=4)


ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    """Record and print one result line, then fail the test if needed."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
