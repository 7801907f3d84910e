import numpy as np
import pytest

from lmreg.geometry import CameraIntrinsics
from lmreg.synthesis import pelvis_landmarks


@pytest.fixture(scope="session")
def pelvis():
    return pelvis_landmarks()


@pytest.fixture(scope="session")
def intr():
    return CameraIntrinsics(sdd=1020.0, pixel_spacing=0.5, image_size=(768, 768))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    def record(number, title, passed, detail):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        terminalreporter.line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
