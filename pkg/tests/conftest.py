import pytest

# filled by the acceptance tests: criterion number -> (passed, message)
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture
def record():
    def _record(key, ok, msg):
        ACCEPTANCE[key] = (bool(ok), msg)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {msg}")
    return _record
