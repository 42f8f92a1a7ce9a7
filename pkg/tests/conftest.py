import pytest

# criterion -> list of (part, passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record():
    def add(criterion, part, passed, detail=""):
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"criterion {criterion} [{part}]: {'PASS' if passed else 'FAIL'} {detail}")
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name} {'pass' if passed else 'FAIL'} {d}".rstrip() for name, passed, d in parts)
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  ({detail})")
