"""Shared pytest plumbing: a terminal section for acceptance verdicts.

Acceptance tests record one line each via `record_verdict`; the hook below
prints them after the run so the pass/fail ledger survives output capture.
"""

_VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    _VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
