import pytest

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(cid: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[cid] = (bool(passed), detail)
        print(f"{cid}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid}: {'PASS' if passed else 'FAIL'}  {detail}")
