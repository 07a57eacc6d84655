"""Degradation oracle: seeded synthetic faces plus ground-truth-labeled
perturbations of clean images.

Each degradation kind maps to a documented set of affected test ids and
a defect threshold. Implied labels come from construction: severity 0
means label 1 for the affected tests, severity at or past the defect
threshold means label 0, anything between is NA, and unaffected tests
are always NA. The oracle only asserts what it provably planted.

All randomness flows through the counter-based Philox generator so
corpora are byte-reproducible across platforms.

Degradations are applied in SOURCE image coordinates. Region-targeted
kinds derive their target region by running the real preprocessing
pipeline on the clean image and mapping the crop-space region masks
back through the crop/resize transform. build_corpus also emits
landmark/box sidecars (from the clean geometry) next to every output
image, so corpus scoring stays anchored even when a degradation would
confuse the fallback detector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyCorpus, IOFailure, RegionUnavailable, SchemaMismatch
from .evaluation import write_labels
from .facemodel import sidecar_path_for
from .imagery import ImageBuffer, erode
from .imgio import encode_png
from .preprocess import FaceContext, PreprocessConfig, preprocess

DEGRADATION_KINDS = (
    "gaussian_blur",
    "white_noise",
    "pixelate",
    "darken",
    "brighten",
    "contrast_compress",
    "background_clutter",
    "background_shadow",
    "face_shadow",
    "specular_blob",
    "red_eye",
    "occlusion_patch",
    "frame_lines",
    "tint_skin",
)

# kind -> (affected test ids, defect severity threshold)
KIND_EFFECTS: dict[str, tuple[tuple[int, ...], float]] = {
    "gaussian_blur": ((1,), 2.0),
    "white_noise": ((24,), 15.0),
    "pixelate": ((7,), 6.0),
    "darken": ((5,), 0.5),
    "brighten": ((5,), 0.5),
    "contrast_compress": ((6,), 0.5),
    "background_clutter": ((10,), 0.5),
    "background_shadow": ((14,), 0.3),
    "face_shadow": ((15,), 0.3),
    "specular_blob": ((12,), 0.08),
    "red_eye": ((13,), 0.25),
    "occlusion_patch": ((20,), 0.5),  # forehead; lower_face maps to 21
    "frame_lines": ((18, 19), 3.0),
    "tint_skin": ((4,), 0.5),
}

REGION_TARGETED = frozenset(
    {
        "background_clutter",
        "background_shadow",
        "face_shadow",
        "specular_blob",
        "red_eye",
        "occlusion_patch",
        "frame_lines",
        "tint_skin",
    }
)


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    severity: float
    seed: int = 0
    region: str = "forehead"  # occlusion_patch only: "forehead" | "lower_face"
    color: tuple[int, int, int] = (60, 90, 200)

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.severity < 0:
            raise ValueError("severity must be >= 0")
        if self.region not in ("forehead", "lower_face"):
            raise ValueError(f"bad occlusion region {self.region!r}")

    def affected_tests(self) -> tuple[int, ...]:
        if self.kind == "occlusion_patch":
            return (21,) if self.region == "lower_face" else (20,)
        return KIND_EFFECTS[self.kind][0]

    def implied_labels(self) -> dict[int, int | None]:
        """Per-test {0,1,NA}; NA everywhere a label cannot be asserted."""
        labels: dict[int, int | None] = {tid: None for tid in range(1, 26)}
        _, defect = KIND_EFFECTS[self.kind]
        for tid in self.affected_tests():
            if self.severity == 0:
                labels[tid] = 1
            elif self.severity >= defect:
                labels[tid] = 0
        return labels


@dataclass(frozen=True)
class SynthSample:
    image: ImageBuffer
    spec: DegradationSpec
    labels: dict[int, int | None] = field(repr=False)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=list(stream) + [0, 0, 0]))


# ---------------------------------------------------------------------------
# synthetic face rendering


def make_face(seed: int, width: int = 260, height: int = 300) -> ImageBuffer:
    """Render a clean frontal synthetic face on a plain background.

    The geometry is tuned so the fallback detector and landmark
    estimator lock onto it, all raw scores sit comfortably on the
    compliant side, and the skin carries fine texture so blur and
    noise degradations have something to destroy.
    """
    rng = _rng(seed, 1)
    w, h = width, height
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    bg = np.array([190.0, 197.0, 208.0]) + rng.integers(-6, 7, size=3)
    img = np.ones((h, w, 3), dtype=np.float64) * bg

    cx = w / 2.0 + rng.uniform(-5, 5)
    cy = h * 0.52 + rng.uniform(-5, 5)
    a = w * 0.32 * rng.uniform(0.95, 1.06)
    b = h * 0.38 * rng.uniform(0.95, 1.06)
    r2 = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2
    face = r2 <= 1.0

    skin = np.array([152.0, 112.0, 92.0]) + rng.uniform(-8, 8, size=3)
    shade = 1.0 - 0.35 * np.clip(r2, 0.0, 1.0)
    face_px = skin[np.newaxis, np.newaxis, :] * shade[:, :, np.newaxis]

    # smooth forehead highlight gives the histogram a bright tail
    hx, hy = cx, cy - 0.55 * b
    sigma_h = 0.18 * a * 2.0
    bump = 90.0 * np.exp(-(((xx - hx) ** 2 + (yy - hy) ** 2) / (2.0 * sigma_h**2)))
    face_px += bump[:, :, np.newaxis] * np.array([1.0, 0.95, 0.9])

    def soft_blob(px, bx, by, sx, sy, color, strength=1.0):
        g = strength * np.exp(
            -(((xx - bx) ** 2) / (2.0 * sx**2) + ((yy - by) ** 2) / (2.0 * sy**2))
        )
        return px * (1.0 - g[:, :, np.newaxis]) + g[:, :, np.newaxis] * np.array(color)

    eye_dx = 0.39 * a
    eye_y = cy - 0.30 * b
    pupil = (98.0, 78.0, 68.0)
    brow = (112.0, 86.0, 76.0)
    for side in (-1.0, 1.0):
        ex = cx + side * eye_dx
        face_px = soft_blob(face_px, ex, eye_y, 7.5, 7.5, pupil)
        face_px = soft_blob(face_px, ex, eye_y - 26.0, 15.0, 4.0, brow, strength=0.85)

    # mouth: flat dark bar with fast ends so the closed-lip line has a
    # well-defined width and a thin vertical extent
    mouth_y = cy + 0.45 * b
    mg = np.exp(
        -(((xx - cx) / (0.36 * a)) ** 4 + ((yy - mouth_y) / 2.2) ** 2)
    )
    face_px = face_px * (1.0 - mg[:, :, np.newaxis]) + mg[:, :, np.newaxis] * np.array(
        [96.0, 46.0, 44.0]
    )

    tex = rng.normal(0.0, 5.0, size=(h, w, 1))
    face_px += tex

    img[face] = face_px[face]
    return ImageBuffer(np.clip(np.round(img), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# crop <-> source mapping


def _src_point(pt, rect, out_size):
    x, y, w, h = rect
    return (
        x + (pt[0] + 0.5) * w / out_size - 0.5,
        y + (pt[1] + 0.5) * h / out_size - 0.5,
    )


def _src_scale(rect, out_size):
    x, y, w, h = rect
    return w / out_size, h / out_size


def _mask_to_source(mask: np.ndarray, rect, src_h: int, src_w: int) -> np.ndarray:
    """Nearest-neighbor upsample of a crop mask into the source frame."""
    x, y, w, h = rect
    out = np.zeros((src_h, src_w), dtype=bool)
    size = mask.shape[0]
    sy = np.arange(h)
    sx = np.arange(w)
    cy = np.clip(np.round((sy + 0.5) * size / h - 0.5).astype(np.int64), 0, size - 1)
    cx = np.clip(np.round((sx + 0.5) * size / w - 0.5).astype(np.int64), 0, size - 1)
    out[y : y + h, x : x + w] = mask[np.ix_(cy, cx)]
    return out


def _require_landmarks(ctx: FaceContext, kind: str):
    if ctx.landmarks is None:
        raise RegionUnavailable(f"{kind} needs landmarks on the clean image")


# ---------------------------------------------------------------------------
# the degradations themselves


def _rgb_to_ycc(px):
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def _ycc_to_rgb(y, cb, cr):
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def _scale_luma(px: np.ndarray, mask: np.ndarray, factor: float) -> np.ndarray:
    """Darken luma inside the mask, preserving chroma exactly."""
    y, cb, cr = _rgb_to_ycc(px)
    y = np.where(mask, y * factor, y)
    return _ycc_to_rgb(y, cb, cr)


def apply(
    img: ImageBuffer,
    spec: DegradationSpec,
    ctx: FaceContext | None = None,
) -> SynthSample:
    """Apply one degradation; severity 0 returns the image bit-identical.

    ``ctx`` may carry the preprocessing of the CLEAN image (computed here
    when absent and needed); region-targeted kinds use its geometry.
    """
    if spec.severity == 0:
        return SynthSample(img, spec, spec.implied_labels())

    if spec.kind in REGION_TARGETED and ctx is None:
        ctx = preprocess(img, PreprocessConfig())

    px = img.pixels.astype(np.float64)
    h, w = img.height, img.width
    out = px

    if spec.kind == "gaussian_blur":
        out = ndimage.gaussian_filter(px, sigma=(spec.severity, spec.severity, 0))
    elif spec.kind == "white_noise":
        noise = _rng(spec.seed, 2).normal(0.0, spec.severity, size=px.shape)
        out = px + noise
    elif spec.kind == "pixelate":
        block = max(1, int(round(spec.severity)))
        if block > 1:
            ph = (block - h % block) % block
            pw = (block - w % block) % block
            padded = np.pad(px, ((0, ph), (0, pw), (0, 0)), mode="edge")
            hh, ww = padded.shape[0] // block, padded.shape[1] // block
            coarse = padded.reshape(hh, block, ww, block, 3).mean(axis=(1, 3))
            out = np.repeat(np.repeat(coarse, block, axis=0), block, axis=1)[:h, :w, :]
    elif spec.kind == "darken":
        gamma = 1.0 + 2.0 * spec.severity
        out = 255.0 * (px / 255.0) ** gamma
    elif spec.kind == "brighten":
        gamma = 1.0 / (1.0 + 2.0 * spec.severity)
        out = 255.0 * (px / 255.0) ** gamma
    elif spec.kind == "contrast_compress":
        m = px.mean()
        out = m + (px - m) * (1.0 - 0.9 * min(1.0, spec.severity))
    else:
        out = _apply_regional(img, spec, ctx)

    degraded = ImageBuffer(np.clip(np.round(out), 0, 255).astype(np.uint8))
    return SynthSample(degraded, spec, spec.implied_labels())


def _face_core_mask(ctx: FaceContext) -> np.ndarray:
    atlas = ctx.atlas
    return atlas.face & ~atlas.eye_zone & ~atlas.eye_surround


def _apply_regional(img: ImageBuffer, spec: DegradationSpec, ctx: FaceContext) -> np.ndarray:
    px = img.pixels.astype(np.float64)
    h, w = img.height, img.width
    rect = ctx.crop_rect
    size = ctx.crop.width
    sev = spec.severity
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    if spec.kind == "background_shadow" or spec.kind == "background_clutter":
        # face plus its dilation guard, mapped back to the source frame;
        # eroding the complement keeps a buffer so face-region scores
        # stay untouched by background-only defects
        face_src = _mask_to_source(~ctx.atlas.background, rect, h, w)
        allowed = erode(~face_src, 3)
        if spec.kind == "background_shadow":
            cover = min(0.45, sev)
            band = xx < cover * w
            return _scale_luma(px, band & allowed, 0.35)
        # clutter: deterministic rectangles inside the crop window (the
        # only background the tests can see); count grows with severity
        # and layouts nest, lower severity draws a prefix of the same set
        rng = _rng(spec.seed, 3)
        # two colors only: with the plain background that makes exactly
        # three color modes, so the homogeneity clustering stays stable
        # across coverage levels instead of reshuffling
        palette = [(60, 90, 200), (70, 160, 90)]
        cx0, cy0, cw, ch = rect
        rects = []
        for _ in range(400):
            rw = int(rng.uniform(0.10, 0.25) * cw)
            rh = int(rng.uniform(0.10, 0.25) * ch)
            rx = cx0 + int(rng.uniform(0, cw - rw))
            ry = cy0 + int(rng.uniform(0, ch - rh))
            color = palette[int(rng.integers(len(palette)))]
            rects.append((rx, ry, rw, rh, color))
        # draw a prefix of the seeded sequence until the target fraction
        # of the visible background is covered: coverage is monotone and
        # nested across severities of the same seed
        visible = allowed.copy()
        visible[: cy0, :] = False
        visible[cy0 + ch :, :] = False
        visible[:, : cx0] = False
        visible[:, cx0 + cw :] = False
        n_visible = max(1, int(visible.sum()))
        target = 0.75 * min(1.0, sev)
        out = px.copy()
        covered = np.zeros((h, w), dtype=bool)
        for rx, ry, rw, rh, color in rects:
            if covered[visible].sum() / n_visible >= target:
                break
            patch = np.zeros((h, w), dtype=bool)
            patch[ry : ry + rh, rx : rx + rw] = True
            patch &= allowed
            out[patch] = color
            covered |= patch
        return out

    if spec.kind == "face_shadow":
        _require_landmarks(ctx, spec.kind)
        face_src = _mask_to_source(ctx.atlas.face, rect, h, w)
        xs = np.nonzero(face_src.any(axis=0))[0]
        if xs.size == 0:
            raise RegionUnavailable("face mask empty in source frame")
        cover = min(0.45, sev)
        cutoff = xs[0] + cover * (xs[-1] - xs[0] + 1)
        band = xx < cutoff
        return _scale_luma(px, band & face_src, 0.35)

    if spec.kind == "specular_blob":
        _require_landmarks(ctx, spec.kind)
        core_src = _mask_to_source(_face_core_mask(ctx), rect, h, w)
        area = float(core_src.sum())
        if area == 0:
            raise RegionUnavailable("face core empty in source frame")
        radius = math.sqrt(min(1.0, sev) * area / math.pi)
        cheek = _src_point((0.38 * size, 0.60 * size), rect, size)
        blob = (xx - cheek[0]) ** 2 + (yy - cheek[1]) ** 2 <= radius**2
        out = px.copy()
        out[blob & core_src] = 255.0
        return out

    if spec.kind == "red_eye":
        _require_landmarks(ctx, spec.kind)
        lm = ctx.landmarks
        sx, _ = _src_scale(rect, size)
        alpha = min(1.0, sev)
        red = np.array([210.0, 40.0, 40.0])
        out = px.copy()
        for side in ("l", "r"):
            pupil = _src_point(lm.points[f"pupil_{side}"], rect, size)
            ew = (
                math.hypot(
                    lm.points[f"eye_outer_{side}"][0] - lm.points[f"eye_inner_{side}"][0],
                    lm.points[f"eye_outer_{side}"][1] - lm.points[f"eye_inner_{side}"][1],
                )
                * sx
            )
            radius = max(2.0, 0.3 * ew)
            disc = (xx - pupil[0]) ** 2 + (yy - pupil[1]) ** 2 <= radius**2
            out[disc] = (1.0 - alpha) * out[disc] + alpha * red
        return out

    if spec.kind == "occlusion_patch":
        _require_landmarks(ctx, spec.kind)
        region = (
            ctx.atlas.lower_face if spec.region == "lower_face" else ctx.atlas.forehead
        )
        region_src = _mask_to_source(region, rect, h, w)
        rows = np.nonzero(region_src.any(axis=1))[0]
        if rows.size == 0:
            raise RegionUnavailable(f"{spec.region} empty in source frame")
        cover = min(1.0, sev)
        cutoff = rows[0] + cover * (rows[-1] - rows[0] + 1)
        band = yy < cutoff
        out = px.copy()
        out[band & region_src] = np.array(spec.color, dtype=np.float64)
        return out

    if spec.kind == "frame_lines":
        _require_landmarks(ctx, spec.kind)
        lm = ctx.landmarks
        sx, sy = _src_scale(rect, size)
        t = max(1.0, sev) * (sx + sy) / 2.0
        target = _mask_to_source(
            ctx.atlas.eye_zone | ctx.atlas.eye_surround, rect, h, w
        )
        lines = np.zeros((h, w), dtype=bool)
        for side in ("l", "r"):
            pcx, pcy = _src_point(lm.points[f"pupil_{side}"], rect, size)
            hw = 14.0 * sx
            hh = 9.0 * sy
            on_x = np.abs(xx - pcx) <= hw + t
            on_y = np.abs(yy - pcy) <= hh + t
            border = (
                (np.abs(np.abs(xx - pcx) - hw) <= t / 2.0) & on_y
            ) | ((np.abs(np.abs(yy - pcy) - hh) <= t / 2.0) & on_x)
            center = (np.abs(yy - pcy) <= t / 2.0) & (np.abs(xx - pcx) <= hw)
            lines |= border | center
        out = px.copy()
        out[lines & target] = np.array([45.0, 42.0, 40.0])
        return out

    if spec.kind == "tint_skin":
        _require_landmarks(ctx, spec.kind)
        face_src = _mask_to_source(ctx.atlas.face, rect, h, w)
        y, cb, cr = _rgb_to_ycc(px)
        cr = np.where(face_src, cr - 40.0 * min(1.0, sev), cr)
        return _ycc_to_rgb(y, cb, cr)

    raise ValueError(f"unhandled kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# corpus building

DEFAULT_SEVERITIES: dict[str, tuple[float, ...]] = {
    "gaussian_blur": (0, 1, 2, 3, 5),
    "white_noise": (0, 5, 10, 20, 40),
    "pixelate": (0, 6, 8, 12, 16),
    "darken": (0, 0.25, 0.5, 0.75, 1.0),
    "brighten": (0, 0.25, 0.5, 0.75, 1.0),
    "contrast_compress": (0, 0.25, 0.5, 0.75, 0.9),
    "background_clutter": (0, 0.15, 0.3, 0.6, 1.0),
    "background_shadow": (0, 0.1, 0.2, 0.3, 0.45),
    "face_shadow": (0, 0.1, 0.2, 0.3, 0.45),
    "specular_blob": (0, 0.02, 0.04, 0.08, 0.15),
    "red_eye": (0, 0.25, 0.5, 0.75, 1.0),
    "occlusion_patch": (0, 0.25, 0.5, 0.75, 1.0),
    "frame_lines": (0, 1, 2, 4, 6),
    "tint_skin": (0, 0.25, 0.5, 0.75, 1.0),
}


@dataclass(frozen=True)
class PlanItem:
    kind: str
    severities: tuple[float, ...]
    count: int


def default_plan(count: int = 10, kinds: tuple[str, ...] | None = None) -> list[PlanItem]:
    picked = kinds if kinds is not None else tuple(k for k in DEGRADATION_KINDS if k != "brighten")
    return [PlanItem(k, DEFAULT_SEVERITIES[k], count) for k in picked]


def load_plan(path: str | Path) -> list[PlanItem]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read plan {path}: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaMismatch("plan must be a JSON array")
    items = []
    for obj in data:
        try:
            items.append(
                PlanItem(
                    str(obj["kind"]),
                    tuple(float(s) for s in obj["severities"]),
                    int(obj["count"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad plan item {obj!r}") from exc
    for item in items:
        if item.kind not in DEGRADATION_KINDS:
            raise SchemaMismatch(f"unknown kind {item.kind!r} in plan")
    return items


def _severity_tag(sev: float) -> str:
    return format(sev, "g").replace(".", "p").replace("-", "m")


def build_corpus(
    base_images: list[tuple[str, ImageBuffer]],
    plan: list[PlanItem],
    seed: int,
    out_dir: str | Path,
    write_sidecars: bool = True,
) -> Path:
    """Emit degraded images plus a labels.csv in the evaluation format.

    Layout: ``<out>/images/*.png`` and ``<out>/labels.csv``. One clean
    copy per base image is labeled 1 for every test the plan touches.
    """
    if not base_images:
        raise EmptyCorpus("no base images")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {img_dir}: {exc}") from exc

    contexts: dict[str, FaceContext] = {}
    for name, img in base_images:
        contexts[name] = preprocess(img, PreprocessConfig())

    plan_tests: set[int] = set()
    for item in plan:
        sample_spec = DegradationSpec(item.kind, 1.0, seed)
        plan_tests.update(sample_spec.affected_tests())

    labels: dict[str, dict[int, int | None]] = {}

    def emit(filename: str, image: ImageBuffer, per_test: dict[int, int | None], ctx: FaceContext):
        rel = f"images/{filename}"
        encode_png(image, img_dir / filename)
        labels[rel] = per_test
        if write_sidecars and ctx.landmarks is not None:
            sidecar = ctx.landmarks.to_dict()
            b = ctx.source_box
            sidecar["boxes"] = [[b.x, b.y, b.w, b.h, b.confidence]]
            sidecar_path_for(img_dir / filename).write_text(
                json.dumps(sidecar, sort_keys=True), encoding="utf-8"
            )

    for name, img in base_images:
        clean_labels: dict[int, int | None] = {tid: None for tid in range(1, 26)}
        for tid in plan_tests:
            clean_labels[tid] = 1
        emit(f"{name}_clean.png", img, clean_labels, contexts[name])

    for item in plan:
        for sev in item.severities:
            if sev == 0:
                continue  # clean copies already emitted
            for name, img in base_images[: item.count]:
                spec = DegradationSpec(item.kind, sev, seed)
                sample = apply(img, spec, contexts[name])
                fname = f"{name}_{item.kind}_s{_severity_tag(sev)}.png"
                emit(fname, sample.image, sample.labels, contexts[name])

    write_labels(out_dir / "labels.csv", labels)
    return out_dir
