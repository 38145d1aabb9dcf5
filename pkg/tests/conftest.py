import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


class Criterion:
    def __init__(self, name: str):
        self.name = name

    def check(self, ok: bool, detail: str = "") -> None:
        _VERDICTS.append((self.name, bool(ok), detail))
        assert ok, f"{self.name}: {detail}"


@pytest.fixture
def criterion(request):
    return Criterion(request.node.get_closest_marker("criterion").args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
