from pathlib import Path

import numpy as np
import pytest

from crfdepth import synthetic
from crfdepth.io import CalibrationSet, RgbImage
from crfdepth.pipeline import Frame

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def kitti_calib_text():
    return (DATA / "calib_cam_to_cam.txt").read_text() + (DATA / "calib_velo_to_cam.txt").read_text()


@pytest.fixture(scope="session")
def scene():
    return synthetic.make_scene()


@pytest.fixture(scope="session")
def fixture_frame(scene):
    return Frame(scene.image, scene.cloud, scene.calib, scene.ground_truth, "synthetic")


@pytest.fixture
def identity_calib():
    return CalibrationSet.identity()


def block_image(rows, cols, block=10, seed=0):
    """Image made of solid blocks with clearly different colours."""
    rng = np.random.default_rng(seed)
    colours = rng.integers(0, 256, size=(rows * cols, 3))
    img = np.zeros((rows * block, cols * block, 3), dtype=np.uint8)
    labels = np.zeros((rows * block, cols * block), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            img[r * block:(r + 1) * block, c * block:(c + 1) * block] = colours[k]
            labels[r * block:(r + 1) * block, c * block:(c + 1) * block] = k
    return RgbImage(img), labels


_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; ``passed=None`` marks a skip."""
    def report(number, passed, detail):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"criterion {number:>2}: {status}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
