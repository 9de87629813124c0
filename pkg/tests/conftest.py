import pytest

# (criterion number, description, passed, detail) appended by test_acceptance
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}")


@pytest.fixture
def two_state():
    """The 2-state chain with rows (0.9, 0.1) and (0.4, 0.6)."""
    from retrodiction.prob_core import make_channel
    return make_channel([[0.9, 0.1], [0.4, 0.6]])
