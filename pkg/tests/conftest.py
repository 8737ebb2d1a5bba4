import pytest

from psrl_ssp import harness
from psrl_ssp.diagnostics import epoch_bound_check, epoch_log_violations

AUDIT = {"runs": 0, "violations": []}
ACCEPTANCE_LINES = []


def audit_run(result):
    """Every simulated run in the suite must respect the epoch-count bound and epoch bookkeeping."""
    inst = result.instance
    bound, ok = epoch_bound_check(result.num_epochs, inst.num_states, inst.num_actions,
                                  result.trace.episodes, result.total_steps)
    problems = epoch_log_violations(result.epoch_log, result.final_counts)
    if not ok:
        problems.append(f"L={result.num_epochs} > epoch bound {bound:.2f}")
    AUDIT["runs"] += 1
    AUDIT["violations"].extend(problems)
    assert not problems, problems


@pytest.fixture(autouse=True, scope="session")
def _audit_every_run():
    harness.add_run_listener(audit_run)
    yield
    harness.remove_run_listener(audit_run)


@pytest.fixture
def audit():
    return AUDIT


@pytest.fixture
def acceptance_line():
    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "audit_summary: runs after every other test")


def pytest_collection_modifyitems(items):
    # criteria judged over the whole suite's runs must see every run first
    items.sort(key=lambda item: item.get_closest_marker("audit_summary") is not None)


def pytest_terminal_summary(terminalreporter):
    terminalreporter.write_sep("-", f"audited {AUDIT['runs']} simulated runs, "
                                    f"{len(AUDIT['violations'])} epoch violations")
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
