import numpy as np
import pytest

from facequal import make_face, preprocess
from facequal.preprocess import FaceContext, PreprocessConfig


class FixedDetector:
    """Replays one known box; keeps crops identical across degraded
    variants of the same base image."""

    def __init__(self, box):
        self.box = box

    def detect(self, img):
        return [self.box]


class FixedLandmarks:
    def __init__(self, lm):
        self.lm = lm

    def estimate(self, crop):
        return self.lm


def pinned_pipeline(ctx: FaceContext):
    """Detector/landmark pair that replays a clean image's geometry."""
    return FixedDetector(ctx.source_box), FixedLandmarks(ctx.landmarks)


@pytest.fixture(scope="session")
def base_faces():
    return [(f"face{s:02d}", make_face(s)) for s in range(10)]


@pytest.fixture(scope="session")
def base_contexts(base_faces):
    return {name: preprocess(img, PreprocessConfig()) for name, img in base_faces}


@pytest.fixture(scope="session")
def clean_face(base_faces):
    return base_faces[0][1]


@pytest.fixture(scope="session")
def clean_ctx(base_contexts):
    return base_contexts["face00"]


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one line each in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
