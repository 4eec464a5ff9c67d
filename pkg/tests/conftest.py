import numpy as np
import pytest

from scatterlab.forward import SphereQuadrature, near_field_matrix
from scatterlab.medium import Grid3, make_phantom, potential_of, standard_pair, STANDARD_BUMP


@pytest.fixture(scope="session")
def grid32():
    return Grid3(2.0, 32)


@pytest.fixture(scope="session")
def std_pair(grid32):
    return standard_pair(grid32)


@pytest.fixture(scope="session")
def std_potentials(std_pair):
    n1, n2 = std_pair
    return potential_of(n1, 1.0), potential_of(n2, 1.0)


@pytest.fixture(scope="session")
def std_bump(grid32):
    return make_phantom([STANDARD_BUMP], grid32, 1.0)


@pytest.fixture(scope="session")
def small_quad():
    return SphereQuadrature(1.25, 8, 16)


@pytest.fixture(scope="session")
def std_near_small(std_potentials, small_quad):
    v1, v2 = std_potentials
    return near_field_matrix(v1, small_quad), near_field_matrix(v2, small_quad)


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ------------------------------------------------------ acceptance report

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE[num] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} {title}: {status}  {detail}".rstrip())
