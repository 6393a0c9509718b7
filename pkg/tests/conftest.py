import numpy as np
import pytest

from stabletwin.datagen import ScenarioConfig, generate_scenario

ACCEPTANCE_FILE = "test_acceptance.py"
_labels, _outcomes, _details = {}, {}, {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario():
    """The default seed-42 scenario used by the desk-scale experiments."""
    return generate_scenario(ScenarioConfig())


@pytest.fixture
def acceptance_detail(request):
    """Record the measured quantity shown next to a criterion's verdict."""
    def record(text):
        _details[request.node.nodeid] = text
    return record


def pytest_collection_modifyitems(items):
    for item in items:
        if ACCEPTANCE_FILE in item.nodeid:
            doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
            _labels[item.nodeid] = doc


def pytest_runtest_logreport(report):
    if report.nodeid not in _labels:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(report.nodeid, report.outcome)
        if report.when == "call":
            _outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _labels:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, label in _labels.items():
        outcome = _outcomes.get(nodeid, "not run")
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        line = f"{status:5s} {label}"
        if nodeid in _details:
            line += f"  [{_details[nodeid]}]"
        terminalreporter.write_line(line)
