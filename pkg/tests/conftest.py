import pytest

_RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def record():
    """Log one part of an acceptance criterion for the end-of-run summary."""

    def _record(criterion: int, part: str, passed, detail: str = ""):
        _RESULTS.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"criterion {criterion}{part}: {'PASS' if passed else 'FAIL'} {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_RESULTS):
        parts = _RESULTS[c]
        ok = all(p for _, p, _ in parts)
        body = "; ".join(f"{name or 'all'} {'ok' if p else 'FAIL'} {d}".strip() for name, p, d in parts)
        terminalreporter.write_line(f"criterion {c:>2}: {'PASS' if ok else 'FAIL'} | {body}")
