"""Shared runs for the test suite; each solve is built once per session."""

from __future__ import annotations

import warnings

import pytest

from expwave import presets
from expwave.verify import make_run, make_study

ACCEPTANCE_LINES: list[str] = []

KAPPAS = (0.25, 0.5, 0.75)


def record(criterion: str, passed: bool, detail: str) -> bool:
    """Print and keep one pass/fail line for the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture(scope="session")
def ode_study():
    return make_study(lambda h: presets.ode(h=h), 1e-3, (-1.6, 1.6), 1.05, around=0.0)


@pytest.fixture(scope="session")
def perturbed_study():
    return make_study(lambda h: presets.perturbed_ode(h=h), 1e-3, (-1.6, 1.6), 1.05, around=0.0)


def tilted_window(kappa):
    return presets.cone_window(lambda x: presets.tilted_T(x, kappa), -0.5, 0.5)


@pytest.fixture(scope="session")
def tilted_studies():
    out = {}
    for k in KAPPAS:
        win = tilted_window(k)
        out[k] = make_study(lambda h, k=k, win=win: presets.tilted(k, window=win, h=h),
                            1e-3, win, 1 + 0.5 * k + 0.05, around=0.0)
    return out


@pytest.fixture(scope="session")
def tilted_run(tilted_studies):
    return tilted_studies[0.5].coarse


@pytest.fixture(scope="session")
def small_ode_run():
    """Coarse ODE run for quick unit tests."""
    return make_run(presets.ode(h=4e-3), 4e-3, (-1.6, 1.6), 1.05, around=0.0)
