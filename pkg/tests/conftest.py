import pytest

from frecency_fl.frecency import Page, Visit, VisitType


def make_page(pid, visits, total=None, bookmarked=False, url=None):
    visits = tuple(Visit(age, kind) for age, kind in visits)
    return Page(
        pid,
        url or f"https://site{pid}.example/0",
        visits,
        len(visits) if total is None else total,
        bookmarked,
    )


@pytest.fixture
def typed_page():
    return make_page(0, [(2.0, VisitType.TYPED)] * 3)


# One summary line per acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE_LINES: dict[int, str] = {}


def report_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
