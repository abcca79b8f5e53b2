import pytest
import torch

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion with a PASS/FAIL line")
    config.stash[_RESULTS] = {}


@pytest.fixture(autouse=True)
def restore_torch_globals():
    # the CLI's --deterministic flag changes process-wide torch settings
    threads, deterministic = torch.get_num_threads(), torch.are_deterministic_algorithms_enabled()
    yield
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(deterministic)


@pytest.fixture
def measured(request):
    """Collects the numbers behind a criterion verdict; they are printed next to PASS/FAIL."""
    values = {}
    request.node.stash[_RESULTS] = values
    return values


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when == "teardown":
        return
    results = item.config.stash[_RESULTS]
    number, title = marker.args
    failed = call.excinfo is not None
    if call.when == "setup" and not failed:
        return
    values = item.stash.get(_RESULTS, {})
    results[number] = (title, "FAIL" if failed else "PASS", values)


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, verdict, values = results[number]
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in values.items())
        terminalreporter.write_line(f"{verdict} [{number:2d}] {title}" + (f": {detail}" if detail else ""))
