import pytest

_ACCEPTANCE: list[tuple[str, bool, str]] = []


class _Recorder:
    def __call__(self, label: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((label, bool(passed), detail))
        print(f"{label}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture(scope="session")
def record_criterion():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")
