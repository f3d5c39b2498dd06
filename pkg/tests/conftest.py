import numpy as np
import pytest

from ssrecon_lab.model import make_model, seed_sequence

N_AMBIENT, D_SIGNAL, SIGMA_Z = 100, 10, 0.1


@pytest.fixture
def ref_model():
    return make_model(N_AMBIENT, D_SIGNAL, SIGMA_Z, 0.1, seed=seed_sequence(0, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def report(criterion: int, passed: bool, detail: str, flagged: bool = False):
        status = "PASS" if passed else "FAIL"
        if passed and flagged:
            status = "PASS (flagged)"
        line = f"criterion {criterion:2d} [{status}] {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
