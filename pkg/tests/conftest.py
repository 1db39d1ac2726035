"""Collects acceptance sub-checks and prints one verdict line per criterion."""

from collections import defaultdict

import pytest

_RESULTS: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


class Recorder:
    def __call__(self, criterion: int, check: str, ok: bool, detail: str = "") -> bool:
        _RESULTS[criterion].append((check, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def record():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(_RESULTS):
        checks = _RESULTS[c]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {c:2d}: {verdict}")
        for name, ok, detail in checks:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
