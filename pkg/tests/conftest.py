import functools

import pytest

from opim.problem import load_builtin
from opim.report import build_table


@pytest.fixture(scope="session")
def ex1():
    return load_builtin("example1")


@pytest.fixture(scope="session")
def ex2():
    return load_builtin("example2")


@pytest.fixture(scope="session")
def ex3():
    return load_builtin("example3")


@functools.lru_cache(maxsize=None)
def cached_table(number):
    return build_table(number)


@pytest.fixture(scope="session")
def table():
    return cached_table


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
