import numpy as np
import pytest

from zpotfs.grid import FrameDims

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    if call.when != "call" or "test_acceptance" not in item.nodeid:
        return
    label = (item.function.__doc__ or item.name).strip().splitlines()[0]
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[item.name] = (label, call.excinfo is None, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_CRITERIA.values()):
        line = f"{'PASS' if ok else 'FAIL'}  {label}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def small_dims():
    return FrameDims(M=16, N=8, l_max=3)


@pytest.fixture
def desk_dims():
    return FrameDims(M=64, N=16, l_max=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

