"""Face detection, landmark estimation, named face regions, and pose.

Detection and landmark estimation sit behind pluggable handles so an
external model can replace the built-in fallbacks, either through the
Python interface or by dropping a ``<image>.landmarks.json`` sidecar
next to the image. The fallbacks are classical: skin-chroma blobs for
detection, template geometry refined by local valley/edge search for
landmarks, and a coarse geometric proxy for pose. The pose fallback's
contract is sign and monotonicity, not metric accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image, ImageDraw

from .errors import DegenerateGeometry, LandmarkFailure, NoFaceDetected, SchemaMismatch
from .imagery import (
    ImageBuffer,
    connected_components,
    dilate,
    erode,
    label_components,
    to_grayscale,
    to_ycbcr,
)

# Skin-chroma box in BT.601 YCbCr (classical Cb/Cr skin bounds)
SKIN_CB = (77.0, 127.0)
SKIN_CR = (133.0, 173.0)

POINT_NAMES = (
    "pupil_l", "pupil_r",
    "eye_outer_l", "eye_inner_l", "eye_inner_r", "eye_outer_r",
    "lid_top_l", "lid_bot_l", "lid_top_r", "lid_bot_r",
    "brow_l", "brow_r",
    "nose_tip", "nose_base",
    "mouth_corner_l", "mouth_corner_r", "lip_top", "lip_bot",
    "chin",
)

CANONICAL_PITCH_RATIO = 0.85


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned face bounding box in source-image coordinates."""

    x: int
    y: int
    w: int
    h: int
    confidence: float

    def __post_init__(self):
        if self.w < 16 or self.h < 16:
            raise ValueError("face box must be at least 16x16")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


@dataclass(frozen=True)
class PoseAngles:
    """Signed head rotation in degrees: roll (in-plane), pitch, yaw."""

    roll: float
    pitch: float
    yaw: float


@dataclass(frozen=True)
class LandmarkSet:
    """Named facial keypoints plus a face-outline polygon, crop coords."""

    points: dict[str, tuple[float, float]]
    contour: tuple[tuple[float, float], ...]
    crop_size: int = 112

    def __post_init__(self):
        missing = [n for n in POINT_NAMES if n not in self.points]
        if missing:
            raise ValueError(f"missing landmark points: {missing}")
        if len(self.contour) < 8:
            raise ValueError("contour needs at least 8 points")
        s = self.crop_size
        clamped = {
            n: (min(max(x, 0.0), s - 1.0), min(max(y, 0.0), s - 1.0))
            for n, (x, y) in self.points.items()
        }
        object.__setattr__(self, "points", clamped)
        object.__setattr__(
            self,
            "contour",
            tuple(
                (min(max(x, 0.0), s - 1.0), min(max(y, 0.0), s - 1.0))
                for x, y in self.contour
            ),
        )
        if self.points["eye_inner_l"][0] >= self.points["eye_inner_r"][0]:
            raise ValueError("eye_inner_l must lie image-left of eye_inner_r")

    def __getattr__(self, name: str) -> tuple[float, float]:
        try:
            return self.points[name]
        except KeyError:
            raise AttributeError(name) from None

    def mirrored(self) -> "LandmarkSet":
        """Horizontal flip: x -> (size-1) - x, left/right names swapped."""
        s = self.crop_size - 1.0

        def flip(pt):
            return (s - pt[0], pt[1])

        swap = {}
        for n, pt in self.points.items():
            if n.endswith("_l"):
                swap[n[:-2] + "_r"] = flip(pt)
            elif n.endswith("_r"):
                swap[n[:-2] + "_l"] = flip(pt)
            else:
                swap[n] = flip(pt)
        return LandmarkSet(swap, tuple(flip(p) for p in self.contour), self.crop_size)

    def to_dict(self) -> dict:
        out = {n: [float(x), float(y)] for n, (x, y) in self.points.items()}
        out["contour"] = [[float(x), float(y)] for x, y in self.contour]
        return out

    @classmethod
    def from_dict(cls, data: dict, crop_size: int = 112) -> "LandmarkSet":
        try:
            points = {n: (float(data[n][0]), float(data[n][1])) for n in POINT_NAMES}
            contour = tuple((float(x), float(y)) for x, y in data["contour"])
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise SchemaMismatch(f"bad landmark sidecar: {exc}") from exc
        return cls(points, contour, crop_size)


@dataclass(frozen=True)
class RegionAtlas:
    """Named region masks (all crop-sized) used by the quality tests."""

    face: np.ndarray = field(repr=False)
    background: np.ndarray = field(repr=False)
    eye_zone_l: np.ndarray = field(repr=False)
    eye_zone_r: np.ndarray = field(repr=False)
    eye_surround: np.ndarray = field(repr=False)
    forehead: np.ndarray = field(repr=False)
    lower_face: np.ndarray = field(repr=False)
    skin: np.ndarray = field(repr=False)

    @property
    def eye_zone(self) -> np.ndarray:
        return self.eye_zone_l | self.eye_zone_r


class DetectorHandle(Protocol):
    def detect(self, img: ImageBuffer) -> list[FaceBox]: ...


class LandmarkHandle(Protocol):
    def estimate(self, crop: ImageBuffer) -> LandmarkSet: ...


class PoseHandle(Protocol):
    def estimate(self, lm: LandmarkSet, crop: ImageBuffer | None) -> PoseAngles: ...


def skin_chroma_mask(img: ImageBuffer) -> np.ndarray:
    """Boolean mask of pixels inside the Cb/Cr skin box."""
    ycc = to_ycbcr(img).pixels.astype(np.float64)
    cb, cr = ycc[:, :, 1], ycc[:, :, 2]
    return (
        (cb >= SKIN_CB[0]) & (cb <= SKIN_CB[1])
        & (cr >= SKIN_CR[0]) & (cr <= SKIN_CR[1])
    )


class FallbackDetector:
    """Skin-chroma blob detector: largest components passing aspect and
    area gates become face boxes. Confidence is area relative to the
    largest accepted component."""

    min_area_frac: float = 0.01
    aspect_range: tuple[float, float] = (0.6, 1.4)

    def detect(self, img: ImageBuffer) -> list[FaceBox]:
        mask = skin_chroma_mask(img)
        comps = connected_components(mask)
        min_area = self.min_area_frac * img.width * img.height
        lo, hi = self.aspect_range
        candidates = []
        for c in comps:
            bw = c.x1 - c.x0 + 1
            bh = c.y1 - c.y0 + 1
            if c.size < min_area or bw < 16 or bh < 16:
                continue
            aspect = bw / bh
            if not lo <= aspect <= hi:
                continue
            candidates.append((c, bw, bh))
        if not candidates:
            raise NoFaceDetected("no skin-chroma component passed the gates")
        largest = max(c.size for c, _, _ in candidates)
        boxes = [
            FaceBox(c.x0, c.y0, bw, bh, confidence=c.size / largest)
            for c, bw, bh in candidates
        ]
        boxes.sort(key=lambda b: (-b.confidence, b.x, b.y))
        return boxes


class SidecarDetector:
    """Detector that reads boxes from a ``<image>.landmarks.json`` sidecar."""

    def __init__(self, sidecar_path: str | Path):
        self.path = Path(sidecar_path)

    def detect(self, img: ImageBuffer) -> list[FaceBox]:
        data = _load_sidecar(self.path)
        raw = data.get("boxes")
        if not raw:
            raise NoFaceDetected(f"sidecar {self.path} carries no boxes")
        try:
            boxes = [FaceBox(int(x), int(y), int(w), int(h), float(c)) for x, y, w, h, c in raw]
        except (TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad boxes in sidecar {self.path}: {exc}") from exc
        boxes.sort(key=lambda b: -b.confidence)
        return boxes


class SidecarLandmarks:
    """Landmark estimator that returns the sidecar annotation verbatim."""

    def __init__(self, sidecar_path: str | Path):
        self.path = Path(sidecar_path)

    def estimate(self, crop: ImageBuffer) -> LandmarkSet:
        data = _load_sidecar(self.path)
        return LandmarkSet.from_dict(data, crop_size=crop.width)


def _load_sidecar(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read sidecar {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaMismatch(f"sidecar {path} must hold a JSON object")
    return data


def sidecar_path_for(image_path: str | Path) -> Path:
    return Path(str(image_path) + ".landmarks.json")


def detect_faces(img: ImageBuffer, detector: DetectorHandle | None = None) -> list[FaceBox]:
    """Run the given detector (fallback when None); boxes sorted by
    confidence descending."""
    det = detector if detector is not None else FallbackDetector()
    boxes = det.detect(img)
    if not boxes:
        raise NoFaceDetected("detector returned no boxes")
    return sorted(boxes, key=lambda b: -b.confidence)


class FallbackLandmarks:
    """Template landmark geometry refined by local image search.

    Pupils are located as dark valleys inside canonical eye bands
    (rows ~31%..49% of the crop); the mouth line is the strongest
    horizontal-edge row in the lower face band (rows ~63%..85%).
    Raises LandmarkFailure when the eye bands carry no structure.
    """

    flat_std = 4.0

    def estimate(self, crop: ImageBuffer) -> LandmarkSet:
        s = crop.width
        if crop.height != s:
            raise ValueError("landmark fallback expects a square crop")
        gray = to_grayscale(crop).plane().astype(np.float64)
        # 3x3 box smoothing to suppress pixel texture
        sm = _box3(gray)

        band_y0, band_y1 = int(0.28 * s), int(0.50 * s)
        pupil_l = self._find_pupil(sm, band_y0, band_y1, int(0.18 * s), int(0.46 * s))
        pupil_r = self._find_pupil(sm, band_y0, band_y1, int(0.54 * s), int(0.82 * s))

        eye_half = 0.08 * s
        lids = {}
        for side, (px, py) in (("l", pupil_l), ("r", pupil_r)):
            run = self._dark_run(sm, int(round(px)), int(round(py)), int(0.12 * s))
            lids[f"lid_top_{side}"] = (px, py - run / 2.0)
            lids[f"lid_bot_{side}"] = (px, py + run / 2.0)

        mouth = self._find_mouth(sm, int(0.63 * s), int(0.85 * s), int(0.30 * s), int(0.70 * s))
        mouth_y, mx_l, mx_r = mouth
        mcx = (mx_l + mx_r) / 2.0
        lip_run = self._dark_run(sm, int(round(mcx)), mouth_y, int(0.10 * s))

        eye_y = (pupil_l[1] + pupil_r[1]) / 2.0
        cx = (pupil_l[0] + pupil_r[0]) / 2.0
        chin_y = min(s - 2.0, mouth_y + 0.55 * (mouth_y - eye_y))
        # nose base placed at the canonical pitch ratio between eyes and chin
        nose_base_y = (eye_y + CANONICAL_PITCH_RATIO * chin_y) / (1.0 + CANONICAL_PITCH_RATIO)
        nose_tip_y = eye_y + 0.55 * (nose_base_y - eye_y)

        points = {
            "pupil_l": pupil_l,
            "pupil_r": pupil_r,
            "eye_outer_l": (pupil_l[0] - eye_half, pupil_l[1]),
            "eye_inner_l": (pupil_l[0] + eye_half, pupil_l[1]),
            "eye_inner_r": (pupil_r[0] - eye_half, pupil_r[1]),
            "eye_outer_r": (pupil_r[0] + eye_half, pupil_r[1]),
            **lids,
            "brow_l": (pupil_l[0], pupil_l[1] - 0.11 * s),
            "brow_r": (pupil_r[0], pupil_r[1] - 0.11 * s),
            "nose_tip": (cx, nose_tip_y),
            "nose_base": (cx, nose_base_y),
            "mouth_corner_l": (float(mx_l), float(mouth_y)),
            "mouth_corner_r": (float(mx_r), float(mouth_y)),
            "lip_top": (mcx, mouth_y - lip_run / 2.0),
            "lip_bot": (mcx, mouth_y + lip_run / 2.0),
            "chin": (cx, chin_y),
        }
        contour = _face_contour(crop, cx, eye_y, chin_y)
        return LandmarkSet(points, contour, crop_size=s)

    def _find_pupil(self, sm, y0, y1, x0, x1):
        window = sm[y0:y1, x0:x1]
        if window.std() < self.flat_std:
            raise LandmarkFailure("eye band has no structure")
        lo = window.min()
        dark = window <= lo + 5.0
        # unrelated dark pixels (shading, frames) can share the cutoff;
        # keep only the blob connected to the darkest pixel
        labeled, _ = label_components(dark)
        iy, ix = np.unravel_index(int(np.argmin(window)), window.shape)
        ys, xs = np.nonzero(labeled == labeled[iy, ix])
        return (x0 + float(xs.mean()), y0 + float(ys.mean()))

    @staticmethod
    def _dark_run(sm, px, py, max_half):
        h, w = sm.shape
        px = min(max(px, 0), w - 1)
        py = min(max(py, 0), h - 1)
        col = sm[:, px]
        # reference brightness from the local neighborhood only, so
        # background rows far up or down the column cannot skew it
        lo = max(0, py - 2 * max_half)
        hi = min(h, py + 2 * max_half + 1)
        ref = float(np.percentile(col[lo:hi], 80))
        thresh = (col[py] + ref) / 2.0
        top = py
        while top > max(0, py - max_half) and col[top - 1] <= thresh:
            top -= 1
        bot = py
        while bot < min(h - 1, py + max_half) and col[bot + 1] <= thresh:
            bot += 1
        return max(2.0, float(bot - top))

    @staticmethod
    def _find_mouth(sm, y0, y1, x0, x1):
        band = sm[y0:y1, x0:x1]
        # detrend every row against its own bright-skin level so the
        # vertical shading gradient cannot masquerade as the lip line
        det = band - np.percentile(band, 80, axis=1, keepdims=True)
        profile = det.mean(axis=1)
        row = y0 + int(np.argmin(profile)) if profile.size else (y0 + y1) // 2
        darkness = np.clip(-det[row - y0], 0, None)
        peak = darkness.max()
        if peak > 1e-9:
            on = np.nonzero(darkness >= 0.5 * peak)[0]
            return row, x0 + int(on[0]), x0 + int(on[-1])
        span = (x1 - x0) // 4
        mid = (x0 + x1) // 2
        return row, mid - span, mid + span


def _box3(plane: np.ndarray) -> np.ndarray:
    from scipy import ndimage as _ndi

    return _ndi.uniform_filter(plane, size=3, mode="mirror")


def _face_contour(crop: ImageBuffer, cx: float, eye_y: float, chin_y: float):
    """Elliptical face outline, sized from the skin-chroma extent when a
    usable amount of skin is visible, else from template proportions."""
    s = crop.width
    skin = skin_chroma_mask(crop)
    if skin.sum() >= 0.10 * s * s:
        ys, xs = np.nonzero(skin)
        cx_e = (xs.min() + xs.max()) / 2.0
        cy_e = (ys.min() + ys.max()) / 2.0
        ax = max((xs.max() - xs.min()) / 2.0, 0.25 * s)
        ay = max((ys.max() - ys.min()) / 2.0, 0.30 * s)
    else:
        cx_e, cy_e = cx, (eye_y + chin_y) / 2.0
        ax, ay = 0.40 * s, 0.48 * s
    ax = min(ax, 0.49 * s)
    ay = min(ay, 0.49 * s)
    angles = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    return tuple(
        (cx_e + ax * math.cos(a), cy_e + ay * math.sin(a)) for a in angles
    )


def fill_polygon(points, size: int) -> np.ndarray:
    """Rasterize a polygon into a boolean mask of shape (size, size)."""
    im = Image.new("L", (size, size), 0)
    ImageDraw.Draw(im).polygon([(float(x), float(y)) for x, y in points], fill=1)
    return np.asarray(im, dtype=bool)


def estimate_landmarks(
    crop: ImageBuffer, estimator: LandmarkHandle | None = None
) -> LandmarkSet:
    """Estimate landmarks on a square face crop. A provided estimator
    (e.g. a sidecar reader) takes precedence over the fallback."""
    est = estimator if estimator is not None else FallbackLandmarks()
    return est.estimate(crop)


def _expand_box(x0, y0, x1, y1, frac, size):
    w = x1 - x0
    h = y1 - y0
    dx = frac * w
    dy = frac * h
    return (
        max(0.0, x0 - dx),
        max(0.0, y0 - dy),
        min(size - 1.0, x1 + dx),
        min(size - 1.0, y1 + dy),
    )


def _box_mask(x0, y0, x1, y1, size):
    mask = np.zeros((size, size), dtype=bool)
    xi0, yi0 = int(math.floor(x0)), int(math.floor(y0))
    xi1, yi1 = int(math.ceil(x1)), int(math.ceil(y1))
    mask[max(0, yi0): yi1 + 1, max(0, xi0): xi1 + 1] = True
    return mask


def build_region_atlas(lm: LandmarkSet, crop: ImageBuffer) -> RegionAtlas:
    """Derive the named region masks from landmarks and crop pixels."""
    s = lm.crop_size
    brow_y = (lm.brow_l[1] + lm.brow_r[1]) / 2.0
    if lm.chin[1] <= brow_y:
        raise DegenerateGeometry("chin must lie below the brow line")

    face = fill_polygon(lm.contour, s)
    background = ~dilate(face, 4)

    zones = {}
    for side in ("l", "r"):
        pts = [
            lm.points[f"eye_outer_{side}"],
            lm.points[f"eye_inner_{side}"],
            lm.points[f"lid_top_{side}"],
            lm.points[f"lid_bot_{side}"],
        ]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        box = _expand_box(min(xs), min(ys), max(xs), max(ys), 0.25, s)
        zones[side] = (box, _box_mask(*box, s) & face)
    eye_zone_l = zones["l"][1]
    eye_zone_r = zones["r"][1]

    surround = np.zeros((s, s), dtype=bool)
    for side in ("l", "r"):
        box = zones[side][0]
        big = _expand_box(*box, 0.60, s)
        surround |= _box_mask(*big, s)
    # erode so the face/background boundary (and its gradient footprint)
    # stays out of the surround band
    surround &= erode(face, 2) & ~(eye_zone_l | eye_zone_r)

    rows = np.arange(s)[:, np.newaxis]
    span = lm.chin[1] - brow_y
    forehead_top = brow_y - 0.35 * span
    forehead = ((rows >= forehead_top) & (rows < brow_y)) & face

    lower = ((rows >= lm.nose_base[1]) & (rows <= lm.chin[1])) & face

    skin = face & skin_chroma_mask(crop)

    return RegionAtlas(
        face=face,
        background=background,
        eye_zone_l=eye_zone_l,
        eye_zone_r=eye_zone_r,
        eye_surround=surround,
        forehead=forehead,
        lower_face=lower,
        skin=skin,
    )


class GeometricPose:
    """Pose proxy from landmark geometry; accurate in sign and monotone
    in displacement, not a metric head-pose solver."""

    def __init__(self, pitch_ratio: float = CANONICAL_PITCH_RATIO):
        self.pitch_ratio = pitch_ratio

    def estimate(self, lm: LandmarkSet, crop: ImageBuffer | None = None) -> PoseAngles:
        dy = lm.pupil_r[1] - lm.pupil_l[1]
        dx = lm.pupil_r[0] - lm.pupil_l[0]
        roll = math.degrees(math.atan2(dy, dx))

        d_l = abs(lm.nose_tip[0] - lm.eye_outer_l[0])
        d_r = abs(lm.eye_outer_r[0] - lm.nose_tip[0])
        if d_l + d_r == 0:
            raise DegenerateGeometry("nose-to-eye distances are both zero")
        yaw = 90.0 * (d_l - d_r) / (d_l + d_r)

        eye_y = (lm.pupil_l[1] + lm.pupil_r[1]) / 2.0
        denom = lm.chin[1] - lm.nose_base[1]
        if denom <= 0:
            raise DegenerateGeometry("chin must lie below the nose base")
        r = (lm.nose_base[1] - eye_y) / denom
        pitch = 90.0 * (r - self.pitch_ratio) / self.pitch_ratio

        clamp = lambda a: max(-90.0, min(90.0, a))
        return PoseAngles(roll=clamp(roll), pitch=clamp(pitch), yaw=clamp(yaw))


def estimate_pose(
    lm: LandmarkSet,
    estimator: PoseHandle | None = None,
    crop: ImageBuffer | None = None,
) -> PoseAngles:
    est = estimator if estimator is not None else GeometricPose()
    return est.estimate(lm, crop)
