"""The 25 compliance tests, the registry binding test ids to operations,
and the runner that produces a quality vector.

Every raw score is normalized so HIGHER means MORE compliant, which
lets one threshold rule (raw >= threshold -> pass) and one ROC
orientation serve all tests. Saturation constants shape the raw scores
only; pass/fail thresholds are owned by calibration.

Tests that need landmarks report NotComputable when landmark
estimation failed; photometric tests keep running on the
template-geometry atlas.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import FacequalError, SchemaMismatch
from .facemodel import GeometricPose, PoseHandle, SKIN_CB, SKIN_CR
from .imagery import (
    HIGHPASS_KERNEL,
    LAPLACIAN_KERNEL,
    convolve_raster,
    dilate,
    filter_small_components,
    gradient_magnitude_raster,
    histogram,
    kmeans_colors,
    percentile,
    rgb_to_hsv_sv,
    to_grayscale,
    to_ycbcr,
)
from .preprocess import FaceContext


@dataclass(frozen=True)
class ScoringConfig:
    """Saturation constants for the raw scores. Defaults are the
    package's documented operating points; all overridable via JSON."""

    blur_variance_ref: float = 250.0
    pixelation_peak_ref: float = 0.22
    eye_open_ratio: float = 0.25
    mouth_open_ratio: float = 0.40
    roll_limit_deg: float = 15.0
    yaw_limit_deg: float = 20.0
    pitch_limit_deg: float = 20.0
    pitch_ratio: float = 0.85
    overexposure_min_channel: int = 250
    overexposure_min_blob_px: int = 10
    overexposure_frac_ref: float = 0.10
    red_eye_channel_margin: int = 50
    red_eye_radius_ratio: float = 0.3
    red_eye_frac_ref: float = 0.3
    shadow_darkness_ratio: float = 0.55
    shadow_chroma_tol: float = 12.0
    shadow_min_blob_px: int = 20
    shadow_frac_ref: float = 0.25
    dark_pixel_thresh: int = 45
    dark_frac_ref: float = 0.5
    edge_grad_thresh: float = 110.0
    edge_density_ref: float = 0.30
    noise_rms_ref: float = 12.0
    noise_flat_grad_thresh: float = 20.0
    noise_min_flat_frac: float = 0.05
    ink_saturation_thresh: float = 0.5
    ink_value_thresh: float = 0.3
    ink_min_blob_px: int = 20
    skin_ellipse_widen: float = 0.15
    low_saturation_band: float = 0.25
    hair_color_distance: float = 30.0
    expression_mouth_ref: float = 0.25
    expression_lift_ref: float = 0.10
    background_min_px: int = 200
    background_kmeans_k: int = 3
    background_kmeans_seed: int = 0
    cluster_rms_ref: float = 64.0


def load_scoring_config(path: str | Path) -> ScoringConfig:
    """Load a ScoringConfig from JSON; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read scoring config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaMismatch("scoring config must be a JSON object")
    known = {f.name for f in fields(ScoringConfig)}
    unknown = set(data) - known
    if unknown:
        raise SchemaMismatch(f"unknown scoring config keys: {sorted(unknown)}")
    try:
        return replace(ScoringConfig(), **data)
    except TypeError as exc:
        raise SchemaMismatch(f"bad scoring config values: {exc}") from exc


@dataclass(frozen=True)
class RawScore:
    """Raw test output in [0, 1]; value is meaningless when not computable."""

    value: float
    computable: bool = True

    def __post_init__(self):
        if self.computable and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"raw score out of range: {self.value}")

    @classmethod
    def na(cls) -> "RawScore":
        return cls(0.0, computable=False)


def _clamp01(v: float) -> float:
    return max(0.0, min(1.0, float(v)))


def _gray(ctx: FaceContext) -> np.ndarray:
    return to_grayscale(ctx.crop).plane().astype(np.float64)


def _chroma(ctx: FaceContext) -> tuple[np.ndarray, np.ndarray]:
    ycc = to_ycbcr(ctx.crop).pixels.astype(np.float64)
    return ycc[:, :, 1], ycc[:, :, 2]


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# ---------------------------------------------------------------------------
# individual scores


def blur_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 1: variance of the Laplacian response over the face."""
    face = ctx.atlas.face
    if not face.any():
        return RawScore.na()
    lap = convolve_raster(_gray(ctx), LAPLACIAN_KERNEL)
    v = float(lap[face].var())
    return RawScore(_clamp01(v / cfg.blur_variance_ref))


def gaze_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 2: pupil displacement from the eye-corner midpoint."""
    lm = ctx.landmarks
    ds = []
    for side in ("l", "r"):
        inner = lm.points[f"eye_inner_{side}"]
        outer = lm.points[f"eye_outer_{side}"]
        pupil = lm.points[f"pupil_{side}"]
        half_w = _dist(inner, outer) / 2.0
        if half_w <= 0:
            return RawScore.na()
        mid = ((inner[0] + outer[0]) / 2.0, (inner[1] + outer[1]) / 2.0)
        ds.append(_dist(pupil, mid) / half_w)
    return RawScore(1.0 - _clamp01(max(ds)))


def _widened_skin_bounds(cfg: ScoringConfig):
    cb_c = (SKIN_CB[0] + SKIN_CB[1]) / 2.0
    cb_h = (SKIN_CB[1] - SKIN_CB[0]) / 2.0 * (1.0 + cfg.skin_ellipse_widen)
    cr_c = (SKIN_CR[0] + SKIN_CR[1]) / 2.0
    cr_h = (SKIN_CR[1] - SKIN_CR[0]) / 2.0 * (1.0 + cfg.skin_ellipse_widen)
    return (cb_c - cb_h, cb_c + cb_h), (cr_c - cr_h, cr_c + cr_h)


def unnatural_color_score(
    ctx: FaceContext, cfg: ScoringConfig, region: np.ndarray, model: str
) -> RawScore:
    """Tests 3/4/20/21: fraction of region pixels with implausible color.

    models: "ink" (saturated bright blobs anywhere), "skin" (chroma off
    the widened skin ellipse), "occlusion" (neither skin-toned nor in
    the low-saturation hair/shadow band).
    """
    n = int(region.sum())
    if n == 0:
        return RawScore.na()
    if model == "ink":
        sat, val = rgb_to_hsv_sv(ctx.crop)
        hits = (sat > cfg.ink_saturation_thresh) & (val > cfg.ink_value_thresh) & region
        hits = filter_small_components(hits, cfg.ink_min_blob_px)
        frac = hits.sum() / n
    elif model == "skin":
        cb, cr = _chroma(ctx)
        (cb0, cb1), (cr0, cr1) = _widened_skin_bounds(cfg)
        outside = ~((cb >= cb0) & (cb <= cb1) & (cr >= cr0) & (cr <= cr1))
        frac = (outside & region).sum() / n
    elif model == "occlusion":
        cb, cr = _chroma(ctx)
        in_skin = (
            (cb >= SKIN_CB[0]) & (cb <= SKIN_CB[1])
            & (cr >= SKIN_CR[0]) & (cr <= SKIN_CR[1])
        )
        sat, val = rgb_to_hsv_sv(ctx.crop)
        hair_or_shadow = (sat < cfg.low_saturation_band) | (val < cfg.low_saturation_band)
        frac = (~in_skin & ~hair_or_shadow & region).sum() / n
    else:
        raise ValueError(f"unknown color model {model!r}")
    return RawScore(1.0 - _clamp01(frac))


def luminance_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 5: face mean distance from mid-gray."""
    face = ctx.atlas.face
    if not face.any():
        return RawScore.na()
    m = float(_gray(ctx)[face].mean())
    return RawScore(1.0 - _clamp01(abs(m - 128.0) / 128.0))


def contrast_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 6: 1%..99% percentile spread of the face histogram."""
    face = ctx.atlas.face
    if not face.any():
        return RawScore.na()
    hist = histogram(to_grayscale(ctx.crop), face)
    spread = percentile(hist, 0.99) - percentile(hist, 0.01)
    return RawScore(_clamp01(spread / 255.0))


def pixelation_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 7: periodic peaks in gradient-projection autocorrelation."""
    grad = gradient_magnitude_raster(_gray(ctx))
    best = 0.0
    for proj in (grad.sum(axis=0), grad.sum(axis=1)):
        x = proj - proj.mean()
        denom = float(np.dot(x, x))
        if denom <= 1e-12:
            continue
        max_lag = min(17, x.size - 1)
        r = np.array(
            [np.dot(x[:-lag], x[lag:]) / denom for lag in range(1, max_lag + 1)]
        )
        # prominence of r[lag] over its lag neighbors, lags 2..16
        for lag in range(2, max_lag):
            prom = r[lag - 1] - (r[lag - 2] + r[lag]) / 2.0
            best = max(best, prom)
    return RawScore(1.0 - _clamp01(best / cfg.pixelation_peak_ref))


def hair_overlap_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 8: upper-face pixels matching the color just above the face."""
    s = ctx.crop.width
    atlas = ctx.atlas
    rows = np.nonzero(atlas.forehead.any(axis=1))[0]
    if rows.size == 0:
        return RawScore.na()
    top = int(rows[0])
    band = np.zeros_like(atlas.face)
    band[max(0, top - int(0.08 * s)) : top, :] = True
    band &= ~atlas.face
    if not band.any():
        return RawScore.na()
    px = ctx.crop.pixels.astype(np.float64)
    ref = px[band].mean(axis=0)
    face_rows = np.nonzero(atlas.face.any(axis=1))[0]
    mid = (face_rows[0] + face_rows[-1]) // 2
    upper = atlas.face.copy()
    upper[mid:, :] = False
    n = int(upper.sum())
    if n == 0:
        return RawScore.na()
    dist = np.sqrt(((px - ref) ** 2).sum(axis=2))
    overlap = float(((dist < cfg.hair_color_distance) & upper).sum()) / n
    return RawScore(1.0 - _clamp01(overlap))


def aperture_score(ctx: FaceContext, cfg: ScoringConfig, feature: str) -> RawScore:
    """Tests 9/22: lid or lip separation relative to feature width."""
    lm = ctx.landmarks
    if feature == "eyes":
        ratios = []
        for side in ("l", "r"):
            width = _dist(lm.points[f"eye_outer_{side}"], lm.points[f"eye_inner_{side}"])
            if width <= 0:
                return RawScore.na()
            gap = _dist(lm.points[f"lid_top_{side}"], lm.points[f"lid_bot_{side}"])
            ratios.append(gap / width)
        a = sum(ratios) / 2.0
        return RawScore(_clamp01(a / cfg.eye_open_ratio))
    if feature == "mouth":
        width = _dist(lm.mouth_corner_l, lm.mouth_corner_r)
        if width <= 0:
            return RawScore.na()
        a = _dist(lm.lip_top, lm.lip_bot) / width
        return RawScore(1.0 - _clamp01(a / cfg.mouth_open_ratio))
    raise ValueError(f"unknown aperture feature {feature!r}")


def background_homogeneity_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 10: dominant background color cluster share and tightness."""
    bg = ctx.atlas.background
    n = int(bg.sum())
    if n < cfg.background_min_px:
        return RawScore.na()
    samples = ctx.crop.pixels[bg].astype(np.float64)
    centroids, assign = kmeans_colors(
        samples, cfg.background_kmeans_k, cfg.background_kmeans_seed
    )
    counts = np.bincount(assign, minlength=cfg.background_kmeans_k)
    top = int(np.argmax(counts))
    share = counts[top] / n
    members = samples[assign == top]
    rms = math.sqrt(float(((members - centroids[top]) ** 2).mean()))
    return RawScore(_clamp01(share * (1.0 - _clamp01(rms / cfg.cluster_rms_ref))))


def pose_compliance_score(
    ctx: FaceContext, cfg: ScoringConfig, estimator: PoseHandle | None = None
) -> RawScore:
    """Test 11: worst pose angle relative to its compliance limit."""
    est = estimator if estimator is not None else GeometricPose(cfg.pitch_ratio)
    angles = est.estimate(ctx.landmarks, ctx.source_ref)
    worst = max(
        abs(angles.roll) / cfg.roll_limit_deg,
        abs(angles.yaw) / cfg.yaw_limit_deg,
        abs(angles.pitch) / cfg.pitch_limit_deg,
    )
    return RawScore(1.0 - _clamp01(worst))


def overexposure_score(
    ctx: FaceContext, cfg: ScoringConfig, region: np.ndarray
) -> RawScore:
    """Tests 12/17: saturated blobs covering part of the region."""
    n = int(region.sum())
    if n == 0:
        return RawScore.na()
    hot = ctx.crop.pixels.min(axis=2) >= cfg.overexposure_min_channel
    hot = filter_small_components(hot & region, cfg.overexposure_min_blob_px)
    frac = hot.sum() / n
    return RawScore(1.0 - _clamp01(frac / cfg.overexposure_frac_ref))


def red_eye_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 13: red dominance in discs around the pupils."""
    lm = ctx.landmarks
    px = ctx.crop.pixels.astype(np.int64)
    red = (px[:, :, 0] - np.maximum(px[:, :, 1], px[:, :, 2])) > cfg.red_eye_channel_margin
    s = ctx.crop.width
    yy, xx = np.mgrid[0:s, 0:s]
    worst = 0.0
    for side in ("l", "r"):
        pupil = lm.points[f"pupil_{side}"]
        width = _dist(lm.points[f"eye_outer_{side}"], lm.points[f"eye_inner_{side}"])
        radius = max(1.0, cfg.red_eye_radius_ratio * width)
        disc = (xx - pupil[0]) ** 2 + (yy - pupil[1]) ** 2 <= radius**2
        n = int(disc.sum())
        if n == 0:
            return RawScore.na()
        worst = max(worst, float((red & disc).sum()) / n)
    return RawScore(1.0 - _clamp01(worst / cfg.red_eye_frac_ref))


def shadow_score(ctx: FaceContext, cfg: ScoringConfig, region: np.ndarray) -> RawScore:
    """Tests 14/15: darkening without hue change covering the region."""
    n = int(region.sum())
    if n == 0:
        return RawScore.na()
    gray = _gray(ctx)
    med = float(np.median(gray[region]))
    dark = (gray < cfg.shadow_darkness_ratio * med) & region
    lit = region & ~dark
    if not lit.any():
        return RawScore(0.0)
    cb, cr = _chroma(ctx)
    ref_cb = float(np.median(cb[lit]))
    ref_cr = float(np.median(cr[lit]))
    same_chroma = (np.abs(cb - ref_cb) <= cfg.shadow_chroma_tol) & (
        np.abs(cr - ref_cr) <= cfg.shadow_chroma_tol
    )
    shadow = filter_small_components(dark & same_chroma, cfg.shadow_min_blob_px)
    frac = shadow.sum() / n
    return RawScore(1.0 - _clamp01(frac / cfg.shadow_frac_ref))


def sunglasses_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 16: dark coverage of the eye zones and their surroundings."""
    region = ctx.atlas.eye_zone | ctx.atlas.eye_surround
    n = int(region.sum())
    if n == 0:
        return RawScore.na()
    frac = float((_gray(ctx)[region] < cfg.dark_pixel_thresh).sum()) / n
    return RawScore(1.0 - _clamp01(frac / cfg.dark_frac_ref))


def edge_density_score(
    ctx: FaceContext, cfg: ScoringConfig, region: np.ndarray
) -> RawScore:
    """Tests 18/19: strong-edge coverage; 1-px dilation weights wide edges."""
    n = int(region.sum())
    if n == 0:
        return RawScore.na()
    edges = gradient_magnitude_raster(_gray(ctx)) > cfg.edge_grad_thresh
    edges = dilate(edges, 1)
    density = float((edges & region).sum()) / n
    return RawScore(1.0 - _clamp01(density / cfg.edge_density_ref))


def other_faces_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 23: exactly one detected face (inherently binary)."""
    return RawScore(1.0 if ctx.face_count == 1 else 0.0)


def white_noise_score(ctx: FaceContext, cfg: ScoringConfig) -> RawScore:
    """Test 24: high-pass RMS over flat (edge-free) pixels."""
    gray = _gray(ctx)
    flat = gradient_magnitude_raster(gray) < cfg.noise_flat_grad_thresh
    if flat.sum() < cfg.noise_min_flat_frac * flat.size:
        return RawScore.na()
    resp = convolve_raster(gray, HIGHPASS_KERNEL)
    rms = math.sqrt(float((resp[flat] ** 2).mean()))
    return RawScore(1.0 - _clamp01(rms / cfg.noise_rms_ref))


def expression_score(
    ctx: FaceContext, cfg: ScoringConfig, estimator=None
) -> RawScore:
    """Test 25: neutrality from mouth aperture and corner lift; a plugged
    classifier may supply its own neutral probability instead."""
    if estimator is not None:
        return RawScore(_clamp01(estimator.neutral_probability(ctx.crop)))
    lm = ctx.landmarks
    width = _dist(lm.mouth_corner_l, lm.mouth_corner_r)
    if width <= 0:
        return RawScore.na()
    aperture = _dist(lm.lip_top, lm.lip_bot) / width
    lip_mid_y = (lm.lip_top[1] + lm.lip_bot[1]) / 2.0
    lift = (
        (abs(lm.mouth_corner_l[1] - lip_mid_y) + abs(lm.mouth_corner_r[1] - lip_mid_y))
        / 2.0
        / width
    )
    worst = max(aperture / cfg.expression_mouth_ref, lift / cfg.expression_lift_ref)
    return RawScore(1.0 - _clamp01(worst))


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class TestEntry:
    id: int
    name: str
    needs_landmarks: bool
    run: Callable[[FaceContext, ScoringConfig], RawScore]


def _registry() -> tuple[TestEntry, ...]:
    def r3(ctx, cfg):
        return unnatural_color_score(
            ctx, cfg, ctx.atlas.face | ctx.atlas.background, "ink"
        )

    def r4(ctx, cfg):
        region = (
            ctx.atlas.face
            & ~ctx.atlas.eye_zone
            & ~ctx.atlas.eye_surround
            & ~ctx.atlas.lower_face
        )
        return unnatural_color_score(ctx, cfg, region, "skin")

    entries = [
        TestEntry(1, "Blur", False, blur_score),
        TestEntry(2, "Eyes direction", True, gaze_score),
        TestEntry(3, "Presence of ink marks", False, r3),
        TestEntry(4, "Odd skin colour", False, r4),
        TestEntry(5, "General illumination", False, luminance_score),
        TestEntry(6, "Contrast", False, contrast_score),
        TestEntry(7, "Pixelation", False, pixelation_score),
        TestEntry(8, "Hair over face", True, hair_overlap_score),
        TestEntry(9, "Eyes open/closed", True, lambda c, f: aperture_score(c, f, "eyes")),
        TestEntry(10, "Heterogeneous background", False, background_homogeneity_score),
        TestEntry(11, "Pose estimation", True, pose_compliance_score),
        TestEntry(
            12,
            "Light reflections on skin",
            False,
            # geometric skin area, not the chroma-gated mask: saturated
            # highlights fall outside the chroma box and must still count
            lambda c, f: overexposure_score(
                c, f, c.atlas.face & ~c.atlas.eye_zone & ~c.atlas.eye_surround
            ),
        ),
        TestEntry(13, "Red eyes", True, red_eye_score),
        TestEntry(
            14,
            "Shadows in the background",
            False,
            lambda c, f: shadow_score(c, f, c.atlas.background),
        ),
        TestEntry(
            15,
            "Shadows over face",
            False,
            lambda c, f: shadow_score(c, f, c.atlas.face),
        ),
        TestEntry(16, "Detection of sunglasses", True, sunglasses_score),
        TestEntry(
            17,
            "Light reflections on glasses",
            True,
            lambda c, f: overexposure_score(c, f, c.atlas.eye_zone | c.atlas.eye_surround),
        ),
        TestEntry(
            18,
            "Wide frames of the glasses",
            True,
            lambda c, f: edge_density_score(c, f, c.atlas.eye_surround),
        ),
        TestEntry(
            19,
            "Frames covering the eyes",
            True,
            lambda c, f: edge_density_score(c, f, c.atlas.eye_zone),
        ),
        TestEntry(
            20,
            "Hat",
            False,
            lambda c, f: unnatural_color_score(c, f, c.atlas.forehead, "occlusion"),
        ),
        TestEntry(
            21,
            "Veil",
            False,
            lambda c, f: unnatural_color_score(c, f, c.atlas.lower_face, "occlusion"),
        ),
        TestEntry(22, "Mouth open/closed", True, lambda c, f: aperture_score(c, f, "mouth")),
        TestEntry(23, "Other faces", False, other_faces_score),
        TestEntry(24, "White noise estimation", False, white_noise_score),
        TestEntry(25, "Expression", True, expression_score),
    ]
    assert [e.id for e in entries] == list(range(1, 26))
    return tuple(entries)


REGISTRY: tuple[TestEntry, ...] = _registry()
TEST_IDS: tuple[int, ...] = tuple(e.id for e in REGISTRY)
TEST_NAMES: dict[int, str] = {e.id: e.name for e in REGISTRY}


@dataclass(frozen=True)
class TestResult:
    id: int
    name: str
    raw: RawScore
    threshold: float
    decision: str  # "pass" | "fail" | "undetermined"


@dataclass(frozen=True)
class QualityVector:
    """25 per-test results in registry order."""

    results: tuple[TestResult, ...]

    def __post_init__(self):
        if len(self.results) != 25:
            raise ValueError("quality vector must hold exactly 25 results")

    @property
    def overall_pass(self) -> bool:
        return all(r.decision != "fail" for r in self.results)

    def by_id(self, test_id: int) -> TestResult:
        return self.results[test_id - 1]


def compute_raw_scores(
    ctx: FaceContext, cfg: ScoringConfig = ScoringConfig()
) -> dict[int, RawScore]:
    """Run every test; per-test errors downgrade to NotComputable."""
    out: dict[int, RawScore] = {}
    for entry in REGISTRY:
        if entry.needs_landmarks and ctx.landmarks is None:
            out[entry.id] = RawScore.na()
            continue
        try:
            out[entry.id] = entry.run(ctx, cfg)
        except FacequalError:
            out[entry.id] = RawScore.na()
    return out


def run_all(
    ctx: FaceContext,
    thresholds: Mapping[int, float],
    cfg: ScoringConfig = ScoringConfig(),
) -> QualityVector:
    """Score all 25 tests and binarize against the given thresholds."""
    raws = compute_raw_scores(ctx, cfg)
    results = []
    for entry in REGISTRY:
        raw = raws[entry.id]
        thr = float(thresholds[entry.id])
        if not raw.computable:
            decision = "undetermined"
        else:
            decision = "pass" if raw.value >= thr else "fail"
        results.append(TestResult(entry.id, entry.name, raw, thr, decision))
    return QualityVector(tuple(results))
