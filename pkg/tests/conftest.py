"""Shared expensive fixtures and the per-criterion acceptance report."""
import pytest

from dempc.analysis import decrease_profile, gridded_storage_lp
from dempc.discount import builtin
from dempc.harness.models import example3


def pytest_configure(config):
    config._dempc_acceptance = {}


@pytest.fixture
def acceptance(request):
    """Record ``(passed, detail)`` for an acceptance criterion number."""
    log = request.config._dempc_acceptance

    def record(number, passed, detail=""):
        log[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_dempc_acceptance", {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        passed, detail = log[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def example3_storage():
    model, orbit, ell_star = example3()
    return gridded_storage_lp(model, orbit, ell_star, 21, 21)


@pytest.fixture(scope="session")
def example3_decrease(example3_storage):
    model, _, ell_star = example3()
    storage, _, _ = example3_storage
    return decrease_profile(model, storage, ell_star, builtin("lin"), storage.nodes, [4, 8, 16, 32])
