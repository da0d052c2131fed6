import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; all of them are printed at the end."""
    def add(label: str, ok: bool | None, detail: str = "") -> None:
        verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        _LINES.append(f"{verdict}  {label}" + (f"  ({detail})" if detail else ""))
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
