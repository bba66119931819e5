import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # surface the one-line-per-criterion acceptance results even though
    # stdout inside the tests is captured
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance")
    lines = getattr(mod, "REPORT_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance summary")
        for line in lines:
            terminalreporter.write_line(line)
