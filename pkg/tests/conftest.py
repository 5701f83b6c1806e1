from __future__ import annotations

import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# (subcommand, scenario) pairs the acceptance criteria read
ACCEPTANCE_RUNS = [
    ("cstar", "default"), ("equilibria", "default"), ("flux", "kz"),
    ("simulate-weak", "smooth"), ("simulate-weak", "two-dirac"), ("simulate-weak", "front"),
    ("simulate-lattice", "parity"), ("pulsate", "two-family"),
    ("simulate-mild", "dichotomy"), ("simulate-mild", "crosscheck"), ("coagfrag", "selfsim"),
]

_REPORT: list = []


@pytest.fixture(scope="session")
def acceptance_runs(tmp_path_factory):
    """Every acceptance scenario run once through the CLI; returns (root, wall-clock seconds)."""
    from wke import cli

    root = tmp_path_factory.mktemp("acceptance")
    wall = {}
    for cmd, scen in ACCEPTANCE_RUNS:
        t0 = time.perf_counter()
        code = cli.main([cmd, "--scenario", scen, "--out", str(root / f"{cmd}-{scen}")])
        wall[cmd, scen] = time.perf_counter() - t0
        assert code == 0, f"{cmd} {scen} exited with {code}"
    return root, wall


def record_acceptance(lines: list[str]) -> None:
    _REPORT[:] = lines


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
