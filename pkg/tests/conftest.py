from pathlib import Path

import numpy as np
import pytest

from factor_acov.linalg_core import SymmetricMatrix

FIXTURES = Path(__file__).parent / "fixtures"
LM_PATH = FIXTURES / "lawley_maxwell_emmett.txt"
LM_N = 211


def exact_one_factor(lam=(0.8, 0.7, 0.6)):
    lam = np.asarray(lam, dtype=float)
    s = np.outer(lam, lam)
    np.fill_diagonal(s, 1.0)
    return SymmetricMatrix(s, "correlation")


def load_lm():
    """The 9-variable ability-test correlation matrix, or skip when the fixture is missing."""
    if not LM_PATH.exists():
        pytest.skip(f"fixture {LM_PATH.name} not found; published-results reproduction tests skipped")
    from factor_acov.cli import parse_matrix_file

    return parse_matrix_file(LM_PATH, "correlation")


@pytest.fixture
def lm():
    return load_lm()


@pytest.fixture
def one_factor():
    return exact_one_factor()


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance-criterion lines collected by test_acceptance.py."""
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
