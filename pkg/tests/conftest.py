import time
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, settings

from penalized_nsf.scenarios import make_problem, run_scenario
from penalized_nsf.solver import PenaltyParams

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


class RunCache:
    """Scenario runs shared across test modules; keyed by everything that defines a run."""

    def __init__(self):
        self.runs = {}

    def get(self, scenario, n=None, t_end=0.5, **params):
        p = replace(PenaltyParams(), **params)
        key = (scenario, n, t_end, p)
        if key not in self.runs:
            problem = make_problem(scenario, n, params=p, t_end=t_end)
            t0 = time.perf_counter()
            report, state = run_scenario(problem, t_end)
            self.runs[key] = (problem, report, state, time.perf_counter() - t0)
        return self.runs[key]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
