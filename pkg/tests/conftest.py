import functools

import pytest

from atomlaser.core import RunConfig, paper_params
from atomlaser.pipeline import run

DT = 2.5e-5


@functools.lru_cache(maxsize=None)
def pipeline_run(r: float):
    return run(RunConfig(paper_params(r), DT))


@pytest.fixture
def params():
    return paper_params()


@pytest.fixture(scope="session")
def runs():
    return pipeline_run


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
