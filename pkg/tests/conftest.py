import numpy as np
import pytest

from plspi.harness import builtin_examples


def random_stabilizable(rng, n, m, scale=1.2):
    """Random (A, B) with B of full column rank; A scaled to a random spectral radius."""
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.3, scale) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-3)
    B = rng.standard_normal((n, m))
    return A, B


@pytest.fixture(scope="session")
def examples():
    return builtin_examples()


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
