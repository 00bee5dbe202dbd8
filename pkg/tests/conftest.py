import contextlib

ACCEPTANCE = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record the outcome of one acceptance criterion; details go in the yielded dict."""
    info = {}
    try:
        yield info
    except BaseException:
        ACCEPTANCE[number] = ("FAIL", title, info)
        raise
    ACCEPTANCE[number] = ("PASS", title, info)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, title, info = ACCEPTANCE[number]
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        terminalreporter.write_line(f"{status} criterion {number}: {title}" + (f" [{detail}]" if detail else ""))
