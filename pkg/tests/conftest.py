import pytest

# criterion label -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def record(label, passed, detail):
    ACCEPTANCE[label] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
