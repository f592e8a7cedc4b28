import pytest

from rfadapt.control import build_lut, choose_linearity_threshold
from rfadapt.frontend import FEEDBACK_ONLY, FFFB, Frontend
from rfadapt.sim import fig17_scenario, fig20_scenario, run

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def report(pytestconfig):
    """Record one PASS/FAIL line for a numbered criterion and return the verdict."""
    def _report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        pytestconfig.stash[ACCEPTANCE].append(line)
        print(line)
        return ok
    return _report


@pytest.fixture(scope="session")
def fe():
    return Frontend.from_characterization(board=FEEDBACK_ONLY)


@pytest.fixture(scope="session")
def fe_fffb():
    return Frontend.from_characterization(board=FFFB)


@pytest.fixture(scope="session")
def thresholds(fe):
    return choose_linearity_threshold(fe)


@pytest.fixture(scope="session")
def lut(fe):
    return build_lut(fe, 3.0)


@pytest.fixture(scope="session")
def fig17_runs():
    return {m: run(fig17_scenario(m)) for m in ("incremental", "lut", "one_shot")}


@pytest.fixture(scope="session")
def fig20_run():
    return run(fig20_scenario())
