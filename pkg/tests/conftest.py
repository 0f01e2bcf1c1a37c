import pytest

_LINES: dict[int, str] = {}


class _Recorder:
    def __call__(self, number: int, ok: bool, detail: str, elapsed: float) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  ({elapsed:.1f} s)  {detail}"
        _LINES[number] = line
        print(line)


@pytest.fixture
def record():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
