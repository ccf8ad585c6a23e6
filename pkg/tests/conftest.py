from __future__ import annotations

import pytest

from listen.model import AttributeSchema, Dataset, Item

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    n, title = marker
    entry = _CRITERIA.setdefault(n, {"title": title, "passed": True, "tests": 0})
    entry["tests"] += 1
    entry["passed"] &= report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        c = _CRITERIA[n]
        status = "PASS" if c["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {c['title']} ({c['tests']} checks)")


@pytest.fixture
def tiny() -> Dataset:
    """Four flights, two metrics and an airline."""
    schema = (
        AttributeSchema("price", "numerical", "minimize", units="USD", description="ticket price"),
        AttributeSchema("duration", "numerical", "minimize", units="min", description="door to door"),
        AttributeSchema("airline", "categorical", description="operating carrier"),
        AttributeSchema("notes", "textual", description="free text"),
    )
    items = (
        Item("f1", {"price": 300.0, "duration": 120.0}, {"airline": "AA"}, {"notes": "red-eye"}),
        Item("f2", {"price": 150.0, "duration": 240.0}, {"airline": "UA"}, {"notes": "one stop"}),
        Item("f3", {"price": 200.0, "duration": 180.0}, {"airline": "AA"}, {}),
        Item("f4", {"price": 450.0, "duration": 90.0}, {"airline": "DL"}, {}),
    )
    return Dataset(
        name="tiny",
        schema=schema,
        items=items,
        persona="You are an expert travel scheduling agent that specializes in air fare.",
        utterance="Cheap matters most, but I hate long trips.",
        ground_truth=("f3", "f2"),
    )
