"""Per-criterion bookkeeping for the acceptance suite.

Tests tagged ``@pytest.mark.criterion(n)`` roll up into one PASS/FAIL line per
criterion, printed at the end of the session.  A test can attach a short
measurement string through the ``criterion_note`` fixture.
"""

import pytest

CRITERIA = {
    1: "gradient suite",
    2: "upsampler convexity and locality",
    3: "fixed 8x convex-upsampling oracle",
    4: "lookup oracles and channel counts",
    5: "warping identities",
    6: "toy convergence",
    7: "downsample robustness",
    8: "implicit upsampler vs bicubic",
    9: "I/O and checkpoint round trips",
    10: "sequence loss semantics",
}

_outcomes: dict[int, list[bool]] = {}
_notes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def _criterion(item):
    m = item.get_closest_marker("criterion")
    return m.args[0] if m else None


@pytest.fixture
def criterion_note(request):
    n = _criterion(request.node)

    def note(text: str) -> None:
        _notes.setdefault(n, []).append(text)

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    n = _criterion(item)
    if n is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(n, []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[n]) else "FAIL"
        notes = "; ".join(_notes.get(n, []))
        terminalreporter.write_line(f"criterion {n:2d} {status}  {name}" + (f"  [{notes}]" if notes else ""))
