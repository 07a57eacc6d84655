import numpy as np
import pytest

from conftest import FixedDetector, FixedLandmarks
from facequal.errors import LandmarkFailure
from facequal.facemodel import FaceBox, POINT_NAMES
from facequal.imagery import ImageBuffer
from facequal.preprocess import (
    PreprocessConfig,
    crop_and_resize,
    crop_rect_for,
    preprocess,
    template_landmarks,
)


class TestCropRect:
    def test_interior_box_gets_full_margin(self):
        assert crop_rect_for(200, 200, FaceBox(50, 60, 40, 40, 1.0), 20) == (30, 40, 80, 80)

    def test_clamped_at_origin(self):
        assert crop_rect_for(200, 200, FaceBox(5, 5, 40, 40, 1.0), 20) == (0, 0, 65, 65)

    def test_clamped_at_far_edge(self):
        assert crop_rect_for(100, 100, FaceBox(70, 70, 25, 25, 1.0), 20) == (50, 50, 50, 50)

    def test_zero_margin_is_box_itself(self):
        assert crop_rect_for(100, 100, FaceBox(10, 20, 30, 40, 1.0), 0) == (10, 20, 30, 40)


class TestConfig:
    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            PreprocessConfig(margin=-1)

    def test_tiny_output_rejected(self):
        with pytest.raises(ValueError):
            PreprocessConfig(out_size=16)


def test_crop_and_resize_shape():
    img = ImageBuffer(np.zeros((300, 260, 3), dtype=np.uint8))
    crop, rect = crop_and_resize(img, FaceBox(60, 70, 120, 150, 1.0), 20, 112)
    assert crop.pixels.shape == (112, 112, 3)
    assert rect == (40, 50, 160, 190)


class TestTemplateLandmarks:
    def test_complete_and_symmetric(self):
        lm = template_landmarks()
        assert set(POINT_NAMES) <= set(lm.points)
        s = lm.crop_size
        assert lm.pupil_l[0] + lm.pupil_r[0] == pytest.approx(s)
        assert lm.pupil_l[1] == lm.pupil_r[1]
        assert lm.chin[1] > lm.nose_base[1] > lm.pupil_l[1]

    def test_scales_with_size(self):
        small = template_landmarks(56)
        big = template_landmarks(112)
        assert small.pupil_l[0] == pytest.approx(big.pupil_l[0] / 2.0)


class TestPreprocess:
    def test_clean_face_full_context(self, clean_face):
        ctx = preprocess(clean_face, PreprocessConfig())
        assert ctx.crop.pixels.shape == (112, 112, 3)
        assert ctx.landmarks is not None
        assert ctx.face_count == 1
        assert ctx.source_ref is None
        x, y, w, h = ctx.crop_rect
        assert 0 <= x and 0 <= y
        assert x + w <= clean_face.width and y + h <= clean_face.height

    def test_keep_source(self, clean_face):
        ctx = preprocess(clean_face, PreprocessConfig(keep_source=True))
        assert ctx.source_ref is clean_face

    def test_fixed_detector_is_honored(self, clean_face):
        box = FaceBox(30, 40, 150, 180, 1.0)
        ctx = preprocess(clean_face, PreprocessConfig(), FixedDetector(box))
        assert ctx.source_box == box
        assert ctx.crop_rect == (10, 20, 190, 220)

    def test_landmark_failure_falls_back_to_template_atlas(self, clean_face):
        class Failing:
            def estimate(self, crop):
                raise LandmarkFailure("no structure")

        ctx = preprocess(clean_face, PreprocessConfig(), estimator=Failing())
        assert ctx.landmarks is None
        # photometric atlas still present and non-trivial
        assert ctx.atlas.face.any()
        assert ctx.atlas.background.any()

    def test_fixed_landmarks_replayed(self, clean_face):
        lm = template_landmarks()
        ctx = preprocess(clean_face, PreprocessConfig(), estimator=FixedLandmarks(lm))
        assert ctx.landmarks is lm
