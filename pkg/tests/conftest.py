import warnings

import numpy as np
import pytest
from hypothesis import settings

from capa_doa.geometry import Aperture
from capa_doa.scene import FarFieldWarning

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

PAPER_POSITION = np.array([-100.0, 80.0, 300.0])
TWO_POSITIONS = (np.array([50.0, -100.0, 15.0]), np.array([200.0, 50.0, 15.0]))

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.fixture
def unit_aperture():
    return Aperture(1.0, 1.0)


@pytest.fixture(autouse=True)
def _quiet_far_field():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FarFieldWarning)
        yield


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _acceptance_marker(report)
    if marker is not None:
        _acceptance[marker] = report.outcome


def _acceptance_marker(report):
    for key, value in report.user_properties:
        if key == "acceptance":
            return value
    return None


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m is not None:
        item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(_acceptance.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}")
