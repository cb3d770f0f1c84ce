import numpy as np
import pytest

from mitodet.dataset import Annotation, Label
from mitodet.geometry import Box
from mitodet.postprocess import Detection

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def det(x, y, score, w=50, h=50, label=Label.MITOTIC):
    return Detection(Box(x, y, w, h), score, label)


def ann(x, y, w=50, h=50, label=Label.MITOTIC):
    return Annotation(Box(x, y, w, h), label)


def random_boxes(rng, n, extent=300.0, size=(20.0, 80.0)):
    xy = rng.uniform(0, extent, size=(n, 2))
    wh = rng.uniform(*size, size=(n, 2))
    return [Box(*xy[i], *wh[i]) for i in range(n)]
