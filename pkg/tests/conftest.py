import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.acceptance_lines):
            terminalreporter.write_line(line[1])


@pytest.fixture(scope="session")
def acceptance_log(request):
    lines = request.config.acceptance_lines

    def log(number, status, text):
        line = f"criterion {number:>2}: {status:<4} {text}"
        print(line)
        lines.append((number, line))

    return log
