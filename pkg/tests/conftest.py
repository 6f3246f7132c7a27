from dataclasses import replace

import pytest

from spiketalk.scenario_file import load_scenario

_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def record(criterion: str, passed: bool, detail: str = ""):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def appendix():
    return load_scenario("appendix.scenario")


@pytest.fixture(scope="session")
def short_events(appendix):
    """The appendix.scenario network compressed in time: load step at 0.1 s, DER 3 out at 0.4 s."""
    from spiketalk.engine import TimedEvent
    return replace(appendix, duration=0.6,
                   timeline=(TimedEvent(0.1, "load_step", 2, 25.0),
                             TimedEvent(0.4, "der_outage", 3)))
