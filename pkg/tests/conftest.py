"""Shared pytest plumbing: the acceptance-criteria summary block.

Each acceptance test records exactly one PASS/FAIL line through the
`criterion` fixture; the lines are echoed in a dedicated section at the end
of the run so the verdicts survive output capturing.
"""

import time

ACCEPTANCE_LINES: list[str] = []

import pytest


@pytest.fixture
def criterion():
    def run(number: int, body):
        t0 = time.monotonic()
        try:
            detail = body()
            ok = True
        except BaseException as exc:  # re-raised below so pytest still fails
            detail = f"{type(exc).__name__}: {exc}"
            ok = False
            raise
        finally:
            elapsed = time.monotonic() - t0
            line = (f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'} "
                    f"({elapsed:8.1f}s)  {detail}")
            ACCEPTANCE_LINES.append(line)
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
