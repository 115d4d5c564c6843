def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance pass/fail lines after the test summary so they
    are visible without -s."""
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in LINES:
            terminalreporter.write_line(line)
