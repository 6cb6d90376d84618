import itertools
import math

import numpy as np
import pytest


def sign_paths(N):
    """All sign sequences of length N in the tree's state order (first sign most significant)."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=N))).reshape(-1, N)


def brute_wiener(N, dt):
    """W(t_i) on the terminal states, columns i = 0..N, built by explicit summation."""
    s = sign_paths(N)
    W = np.zeros((len(s), N + 1))
    for i in range(1, N + 1):
        W[:, i] = W[:, i - 1] + s[:, i - 1] * math.sqrt(dt)
    return W


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def record(number, name, value, threshold, comparison="<="):
    """Append one acceptance line and return whether it passed."""
    ok = value <= threshold if comparison == "<=" else value >= threshold
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {name}: measured {value:.6g} {comparison} {threshold:.6g}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
