from pathlib import Path

import numpy as np
import pytest

from nehari_lab.functional import Problem
from nehari_lab.model import ProblemConfig, build_grid, load_config, make_bump, parse_weight

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


def subcritical_cfg(**kw):
    return ProblemConfig(p=1.5, q=1.8, s=0.5, delta=1.2, r=3.0, mode="subcritical").with_(**kw)


def critical_cfg(**kw):
    return ProblemConfig(p=1.5, q=1.2, s=0.5, delta=1.1, r=6.0, mode="critical").with_(**kw)


def sign_changing_cfg(**kw):
    return subcritical_cfg(
        weight_a=parse_weight("sinusoid freqs=1,0 amplitude=1 offset=0.5"),
        weight_b=parse_weight("step axis=1 at=0.5 width=0.02 low=1 high=-0.5"),
    ).with_(**kw)


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def sub_cfg():
    return load_config(FIXTURES / "subcritical.cfg")


@pytest.fixture(scope="session")
def crit_cfg():
    return load_config(FIXTURES / "critical.cfg")


@pytest.fixture(scope="session")
def small_problem():
    """Subcritical problem on a coarse grid for fast unit tests."""
    return Problem(subcritical_cfg(grid_n=12))


@pytest.fixture(scope="session")
def sub_problem():
    return Problem(subcritical_cfg(grid_n=32))


@pytest.fixture
def bump16():
    grid = build_grid((1.0, 1.0), 16)
    return make_bump(grid, (0.5, 0.5), 0.35)


def random_field(problem, rng, positive=False):
    vals = rng.uniform(0.1 if positive else -1.0, 1.0, problem.grid.interior_count)
    return problem.field(vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance verdicts --------------------------------------------------------

VERDICTS = []


def verdict(number, name, ok, detail):
    """Print and record one PASS/FAIL line, then fail the test if needed."""
    line = f"criterion {number:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    VERDICTS.append(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
