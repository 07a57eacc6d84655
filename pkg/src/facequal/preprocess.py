"""Normalization pipeline: detect -> crop with margin -> resize.

Produces the FaceContext every quality test consumes: a fixed-size
face crop plus landmarks and region masks. Landmark failure is
non-fatal; the context then carries a template-geometry atlas so
photometric tests can still run, and landmark-dependent tests report
NotComputable downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LandmarkFailure
from .facemodel import (
    FaceBox,
    LandmarkHandle,
    LandmarkSet,
    DetectorHandle,
    RegionAtlas,
    build_region_atlas,
    detect_faces,
    estimate_landmarks,
)
from .imagery import ImageBuffer, resize_bilinear


@dataclass(frozen=True)
class PreprocessConfig:
    margin: int = 20
    out_size: int = 112
    keep_source: bool = False

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.out_size < 32:
            raise ValueError("out_size must be >= 32")


@dataclass(frozen=True)
class FaceContext:
    """Preprocessed face: crop, landmarks (None on landmark failure),
    region atlas, detection metadata, optional source image handle."""

    crop: ImageBuffer
    landmarks: LandmarkSet | None
    atlas: RegionAtlas
    source_box: FaceBox
    face_count: int
    crop_rect: tuple[int, int, int, int]  # x, y, w, h in source coords
    source_ref: ImageBuffer | None = None


def template_landmarks(size: int = 112) -> LandmarkSet:
    """Canonical frontal landmark geometry for a square crop.

    Used both as the refinement template and as the photometric-atlas
    fallback when landmark estimation fails.
    """
    s = float(size)
    eye_y = 0.402 * s
    pl = (0.357 * s, eye_y)
    pr = (0.643 * s, eye_y)
    eye_half = 0.08 * s
    mouth_y = 0.705 * s
    chin_y = mouth_y + 0.55 * (mouth_y - eye_y)
    nose_base_y = (eye_y + 0.85 * chin_y) / 1.85
    cx = 0.5 * s
    points = {
        "pupil_l": pl,
        "pupil_r": pr,
        "eye_outer_l": (pl[0] - eye_half, eye_y),
        "eye_inner_l": (pl[0] + eye_half, eye_y),
        "eye_inner_r": (pr[0] - eye_half, eye_y),
        "eye_outer_r": (pr[0] + eye_half, eye_y),
        "lid_top_l": (pl[0], eye_y - 0.035 * s),
        "lid_bot_l": (pl[0], eye_y + 0.035 * s),
        "lid_top_r": (pr[0], eye_y - 0.035 * s),
        "lid_bot_r": (pr[0], eye_y + 0.035 * s),
        "brow_l": (pl[0], eye_y - 0.11 * s),
        "brow_r": (pr[0], eye_y - 0.11 * s),
        "nose_tip": (cx, eye_y + 0.55 * (nose_base_y - eye_y)),
        "nose_base": (cx, nose_base_y),
        "mouth_corner_l": (cx - 0.125 * s, mouth_y),
        "mouth_corner_r": (cx + 0.125 * s, mouth_y),
        "lip_top": (cx, mouth_y - 0.02 * s),
        "lip_bot": (cx, mouth_y + 0.02 * s),
        "chin": (cx, chin_y),
    }
    import math

    cy = 0.52 * s
    ax, ay = 0.40 * s, 0.48 * s
    contour = tuple(
        (cx + ax * math.cos(a), cy + ay * math.sin(a))
        for a in np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    )
    return LandmarkSet(points, contour, crop_size=size)


def crop_rect_for(
    width: int, height: int, box: FaceBox, margin: int
) -> tuple[int, int, int, int]:
    """Box expanded by the margin on each side, clamped to image bounds."""
    x0 = max(0, box.x - margin)
    y0 = max(0, box.y - margin)
    x1 = min(width, box.x + box.w + margin)
    y1 = min(height, box.y + box.h + margin)
    return x0, y0, x1 - x0, y1 - y0


def crop_and_resize(
    img: ImageBuffer, box: FaceBox, margin: int, out_size: int
) -> tuple[ImageBuffer, tuple[int, int, int, int]]:
    """Crop the margin-expanded box (clamped) and resize to out_size^2."""
    x, y, w, h = crop_rect_for(img.width, img.height, box, margin)
    sub = ImageBuffer(img.pixels[y : y + h, x : x + w, :])
    return resize_bilinear(sub, out_size, out_size), (x, y, w, h)


def preprocess(
    img: ImageBuffer,
    cfg: PreprocessConfig = PreprocessConfig(),
    detector: DetectorHandle | None = None,
    estimator: LandmarkHandle | None = None,
) -> FaceContext:
    """Full pipeline: detect faces, crop the top box with margin, resize,
    then estimate landmarks and derive the region atlas on the crop."""
    boxes = detect_faces(img, detector)
    crop, rect = crop_and_resize(img, boxes[0], cfg.margin, cfg.out_size)
    try:
        lm = estimate_landmarks(crop, estimator)
    except LandmarkFailure:
        lm = None
    atlas_lm = lm if lm is not None else template_landmarks(cfg.out_size)
    atlas = build_region_atlas(atlas_lm, crop)
    return FaceContext(
        crop=crop,
        landmarks=lm,
        atlas=atlas,
        source_box=boxes[0],
        face_count=len(boxes),
        crop_rect=rect,
        source_ref=img if cfg.keep_source else None,
    )
