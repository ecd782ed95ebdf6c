"""Collects one verdict line per acceptance criterion and prints them after the run."""

import pytest

_VERDICTS: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture(scope="session")
def record_ac():
    def record(ac: str, passed: bool, detail: str):
        _VERDICTS.setdefault(ac, []).append((bool(passed), detail))
        return bool(passed)

    return record


def _key(ac: str):
    return int(ac.split("-")[1])


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_VERDICTS, key=_key):
        parts = _VERDICTS[ac]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"{ac:<6} {'PASS' if ok else 'FAIL'}  {detail}")
