"""Shared fixtures: acceptance-criteria recording and the summary printout."""

from contextlib import contextmanager

import pytest

_acceptance_results = []


@pytest.fixture
def acceptance():
    """Context manager recording one pass/fail line per criterion.

    Usage:
        with acceptance(3, "norm ordering") as rec:
            ...
            rec["detail"] = "max gap 1.2e-13"
            assert ok
    """

    @contextmanager
    def criterion(number, name):
        rec = {"detail": ""}
        try:
            yield rec
        except BaseException as exc:
            detail = rec["detail"] or f"{type(exc).__name__}: {exc}"
            _acceptance_results.append((number, name, False, detail))
            raise
        _acceptance_results.append((number, name, True, rec["detail"]))

    return criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_acceptance_results):
        status = "PASS" if ok else "FAIL"
        tail = f" [{detail}]" if detail else ""
        terminalreporter.write_line(f"criterion {number:2d} {name}: {status}{tail}")
