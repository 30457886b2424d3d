import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance scorecard after the run, whatever the capture mode."""
    for name in ("tests.test_acceptance", "test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None and getattr(mod, "VERDICTS", None):
            terminalreporter.write_sep("-", "acceptance scorecard")
            for line in mod.VERDICTS:
                terminalreporter.write_line(line)
            break
