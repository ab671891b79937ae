import os

import pytest

from helpers import worked_example

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def worked_pair():
    return worked_example()


@pytest.fixture
def toy_corpus():
    return tuple(os.path.join(DATA, "toy." + ext) for ext in ("src", "tgt", "align"))


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): one acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            item.user_properties.append(("acceptance", mark.args[0]))


def pytest_runtest_logreport(report):
    names = [v for k, v in report.user_properties if k == "acceptance"]
    if not names:
        return
    if report.when == "call" or report.outcome != "passed":
        ok = _ACCEPTANCE.get(names[0], True) and report.outcome == "passed"
        _ACCEPTANCE[names[0]] = ok


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _ACCEPTANCE.items():
        terminalreporter.write_line("%s  %s" % ("PASS" if ok else "FAIL", name))
