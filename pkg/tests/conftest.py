import time

import numpy as np
import pytest

from sdcwarp.core import Frame
from sdcwarp.optimize import default_schedule, fit_transform
from sdcwarp.resample import MotionField, warp_vector

ACCEPTANCE_LINES: list[str] = []


def smooth_image(h=64, w=64):
    """Smooth 2-D gradient image: a ramp plus low-frequency waves."""
    yy, xx = np.mgrid[0:h, 0:w] / 63.0
    return 0.5 + 0.2 * np.sin(2 * np.pi * (1.3 * xx + 0.2 * yy)) * np.cos(2 * np.pi * 1.1 * yy) + 0.1 * xx


@pytest.fixture(scope="session")
def warp_fit():
    """Four-phase fit of a known constant (2, -1) bilinear warp on a 64x64 smooth image.

    Returns ``(source, target, report, seconds)``.
    """
    src = Frame(smooth_image())
    tgt = warp_vector(src, MotionField.constant(64, 64, 2.0, -1.0))
    start = time.perf_counter()
    report = fit_transform(src, tgt, 11, default_schedule("paper"), seed=0)
    return src, tgt, report, time.perf_counter() - start


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
