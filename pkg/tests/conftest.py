import pytest

_RESULTS: dict[str, tuple[str, str]] = {}


class Criterion:
    """Records the outcome of one acceptance criterion for the summary table."""

    def __init__(self, key: str, title: str):
        self.key, self.title, self.detail = key, title, ""

    def note(self, text: str) -> None:
        self.detail = text


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    crit = Criterion(*marker.args)
    yield crit
    rep = getattr(request.node, "rep_call", None)
    if rep is None:
        status = "SKIP" if getattr(request.node, "rep_setup", None) and request.node.rep_setup.skipped else "FAIL"
    elif rep.skipped:
        status = "SKIP"
    else:
        status = "PASS" if rep.passed else "FAIL"
    _RESULTS[crit.key] = (status, f"{crit.title}{': ' + crit.detail if crit.detail else ''}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: int(k)):
        status, text = _RESULTS[key]
        terminalreporter.write_line(f"[{status}] {key:>2}. {text}")
