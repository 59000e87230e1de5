import sys

import pytest

from flatrenorm.mapcore import FlatCircleMap, FlatMapParams

BASE = dict(x1="-0.4", x2="0.2", x3="0.5", x4="0.7", s="0.5", ell1="1.4", ell2="1.7")


def plain_map(bits=256, **over):
    kw = dict(BASE)
    kw.update(over)
    return FlatCircleMap(FlatMapParams.from_values(bits, **kw))


@pytest.fixture(scope="session")
def base_map():
    return plain_map()


@pytest.fixture(scope="session")
def quick_tuned():
    """Base map tuned in-process to golden combinatorics at depth 16."""
    from flatrenorm.rotation import tune

    res = tune(FlatMapParams.from_values(256, **BASE), "x4", ("0.536", "0.55"), 16)
    return FlatCircleMap(res.params)


PARTNER = dict(x1="-0.6", x2="0.25", x3="0.5", x4="0.65", s="0.8", ell1="1.4", ell2="1.7")


@pytest.fixture(scope="session")
def quick_partner():
    from flatrenorm.rotation import tune

    res = tune(FlatMapParams.from_values(256, **PARTNER), "x4", ("0.584", "0.5985"), 13)
    return FlatCircleMap(res.params)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
