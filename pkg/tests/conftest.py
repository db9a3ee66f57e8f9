import math

import numpy as np
import pytest

from deltalab.attention import AttentionProblem

ACCEPTANCE_LINES = []


def make_problem(seed: int, n: int, d: int, scale_inputs: bool = True, scale=None) -> AttentionProblem:
    rng = np.random.default_rng(seed)
    s = 1.0 / math.sqrt(d) if scale_inputs else 1.0
    # unscaled inputs give peaked softmax rows, which exercise sparsity harder
    return AttentionProblem(
        s * rng.standard_normal((n, d)),
        s * rng.standard_normal((n, d)),
        rng.standard_normal((n, d)),
        scale=scale,
    )


@pytest.fixture
def problem():
    return make_problem


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
