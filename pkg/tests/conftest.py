import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Write one PASS/FAIL line for an acceptance criterion, then assert it."""
    config = request.config
    lines = config.stash.setdefault(_ACCEPTANCE, [])
    tr = config.pluginmanager.get_plugin("terminalreporter")

    def _report(number, title, ok, detail):
        line = f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
