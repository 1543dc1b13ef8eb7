import pytest

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(cid, passed, detail=""):
        ACCEPTANCE[cid] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] {cid}: {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {cid}  {detail}")
