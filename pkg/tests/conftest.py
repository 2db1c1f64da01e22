import time

import pytest

ACCEPTANCE_LINES: list[str] = []
SESSION_START = time.perf_counter()


@pytest.fixture
def acceptance_log(capsys):
    """Record one pass/fail line per acceptance criterion and echo it live."""

    def log(number: int, title: str, checks: dict, elapsed: float):
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"ACCEPTANCE {number} {title}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s)"
        if failed:
            line += " failed: " + "; ".join(failed)
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pytest_collection_modifyitems(items):
    # acceptance criteria run last so the suite-time check covers the whole session
    items.sort(key=lambda item: item.module.__name__.endswith("test_acceptance"))
