import pytest

_CRITERIA = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.ok = None
        self.detail = ""

    def check(self, ok: bool, detail: str = ""):
        self.ok = bool(ok) if self.ok is None else (self.ok and bool(ok))
        if detail:
            self.detail = f"{self.detail}; {detail}" if self.detail else detail
        assert ok, f"criterion {self.number}: {detail}"


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("acceptance")
    number, title = marker.args
    crit = _CRITERIA.setdefault(number, Criterion(number, title))
    yield crit
    rep = getattr(request.node, "rep_call", None)
    if rep is not None and rep.failed:
        crit.ok = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        c = _CRITERIA[number]
        status = "PASS" if c.ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {c.title}: {c.detail}")
