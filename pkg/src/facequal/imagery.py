"""Pixel-level primitives: color conversion, convolution, histograms,
gradients, connected components, k-means color clustering.

Conventions used throughout the package:
  - images are ``ImageBuffer`` objects wrapping uint8 arrays of shape
    (h, w, c) with c in {1, 3};
  - region masks are plain boolean numpy arrays of shape (h, w);
  - all real-valued intermediate rasters are float64; quantization back
    to uint8 happens only at I/O boundaries.

Border handling for every convolution is reflect-101 (scipy "mirror").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    ChannelMismatch,
    EmptyHistogram,
    EmptyRegion,
    ImageTooSmall,
    KernelLargerThanImage,
    TooFewSamples,
)

# 8-connectivity structuring element for component labeling
_STRUCT8 = np.ones((3, 3), dtype=bool)

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)
HIGHPASS_KERNEL = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.float64) / 8.0
_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class ImageBuffer:
    """Owned h x w x c 8-bit raster; c is 1 (grayscale) or 3 (RGB)."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def plane(self) -> np.ndarray:
        """Single-channel view as a 2-D array."""
        if self.channels != 1:
            raise ChannelMismatch("plane() requires a single-channel image")
        return self.pixels[:, :, 0]


@dataclass(frozen=True)
class Kernel2D:
    """Square convolution kernel with an odd size >= 3."""

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("kernel must be square")
        if w.shape[0] < 3 or w.shape[0] % 2 == 0:
            raise ValueError("kernel size must be odd and >= 3")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Component:
    """One connected component of a mask: pixel count and bounding box."""

    size: int
    x0: int
    y0: int
    x1: int  # inclusive
    y1: int  # inclusive


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B)."""
    if img.channels != 3:
        raise ChannelMismatch("to_grayscale needs a 3-channel image")
    rgb = img.pixels.astype(np.float64)
    y = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return ImageBuffer(np.clip(np.round(y), 0, 255).astype(np.uint8))


def to_ycbcr(img: ImageBuffer) -> ImageBuffer:
    """ITU-R BT.601 full-range RGB -> YCbCr."""
    if img.channels != 3:
        raise ChannelMismatch("to_ycbcr needs a 3-channel image")
    rgb = img.pixels.astype(np.float64)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    out = np.stack([y, cb, cr], axis=2)
    return ImageBuffer(np.clip(np.round(out), 0, 255).astype(np.uint8))


def ycbcr_to_rgb(img: ImageBuffer) -> ImageBuffer:
    """Inverse BT.601 full-range transform."""
    if img.channels != 3:
        raise ChannelMismatch("ycbcr_to_rgb needs a 3-channel image")
    ycc = img.pixels.astype(np.float64)
    y = ycc[:, :, 0]
    cb = ycc[:, :, 1] - 128.0
    cr = ycc[:, :, 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    out = np.stack([r, g, b], axis=2)
    return ImageBuffer(np.clip(np.round(out), 0, 255).astype(np.uint8))


def convolve(img: ImageBuffer, kernel: Kernel2D) -> np.ndarray:
    """True 2-D convolution of a grayscale image, reflect-101 borders.

    Returns a signed float64 raster with the same shape as the image.
    """
    plane = img.plane().astype(np.float64)
    if kernel.size > img.height or kernel.size > img.width:
        raise KernelLargerThanImage(
            f"kernel {kernel.size} exceeds image {img.width}x{img.height}"
        )
    return ndimage.convolve(plane, kernel.weights, mode="mirror")


def convolve_raster(plane: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Convolution on a raw float raster (internal fast path)."""
    return ndimage.convolve(np.asarray(plane, dtype=np.float64), weights, mode="mirror")


def histogram(img: ImageBuffer, mask: np.ndarray | None = None) -> np.ndarray:
    """256-bin intensity histogram, optionally restricted to a mask."""
    plane = img.plane()
    if mask is not None:
        if mask.shape != plane.shape:
            raise ValueError("mask dimensions must match image")
        values = plane[mask]
        if values.size == 0:
            raise EmptyRegion("mask selects zero pixels")
    else:
        values = plane.ravel()
    return np.bincount(values, minlength=256).astype(np.int64)


def percentile(hist: np.ndarray, p: float) -> int:
    """Smallest intensity v whose cumulative count reaches p * total.

    percentile(0) returns the lowest occupied bin.
    """
    total = int(hist.sum())
    if total == 0:
        raise EmptyHistogram("histogram holds no counts")
    cum = np.cumsum(hist)
    target = max(p * total, 1e-12)  # p=0 -> first occupied bin
    return int(np.searchsorted(cum, target, side="left"))


def gradient_magnitude(img: ImageBuffer) -> np.ndarray:
    """sqrt(Gx^2 + Gy^2) with 3x3 Sobel operators, reflect-101 borders."""
    if img.height < 3 or img.width < 3:
        raise ImageTooSmall("gradient needs at least a 3x3 image")
    plane = img.plane().astype(np.float64)
    gx = ndimage.convolve(plane, _SOBEL_X, mode="mirror")
    gy = ndimage.convolve(plane, _SOBEL_Y, mode="mirror")
    return np.sqrt(gx * gx + gy * gy)


def gradient_magnitude_raster(plane: np.ndarray) -> np.ndarray:
    """Sobel magnitude on a raw float raster."""
    plane = np.asarray(plane, dtype=np.float64)
    gx = ndimage.convolve(plane, _SOBEL_X, mode="mirror")
    gy = ndimage.convolve(plane, _SOBEL_Y, mode="mirror")
    return np.sqrt(gx * gx + gy * gy)


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connectivity labeling; returns (label raster, component count)."""
    labels, count = ndimage.label(mask, structure=_STRUCT8)
    return labels, int(count)


def connected_components(mask: np.ndarray) -> list[Component]:
    """Connected components of a boolean mask under 8-connectivity."""
    labels, count = label_components(mask)
    out: list[Component] = []
    if count == 0:
        return out
    slices = ndimage.find_objects(labels)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    for idx, sl in enumerate(slices, start=1):
        ys, xs = sl
        out.append(
            Component(
                size=int(sizes[idx]),
                x0=int(xs.start),
                y0=int(ys.start),
                x1=int(xs.stop - 1),
                y1=int(ys.stop - 1),
            )
        )
    return out


def filter_small_components(mask: np.ndarray, min_size: int) -> np.ndarray:
    """Drop components smaller than min_size pixels from a boolean mask."""
    labels, count = label_components(mask)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels]


def kmeans_colors(
    samples: np.ndarray, k: int, seed: int, max_iter: int = 50, tol: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means over color triples (k-means++ init, Lloyd updates).

    Deterministic for a fixed seed. Stops when the largest centroid shift
    drops below ``tol`` or after ``max_iter`` iterations.

    Returns (centroids (k, d), assignments (n,)).
    """
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, np.newaxis]
    n = pts.shape[0]
    if n < k:
        raise TooFewSamples(f"{n} samples for k={k}")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, pts.shape[1]), dtype=np.float64)
    centroids[0] = pts[rng.integers(n)]
    closest = np.full(n, np.inf)
    for i in range(1, k):
        d2 = np.sum((pts - centroids[i - 1]) ** 2, axis=1)
        closest = np.minimum(closest, d2)
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centroid
            centroids[i:] = centroids[i - 1]
            break
        probs = closest / total
        centroids[i] = pts[rng.choice(n, p=probs)]

    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = np.sum((pts[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2, axis=2)
        assignments = np.argmin(d2, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = pts[assignments == j]
            if members.shape[0] > 0:
                new_centroids[j] = members.mean(axis=0)
        shift = np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    d2 = np.sum((pts[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2, axis=2)
    assignments = np.argmin(d2, axis=1)
    return centroids, assignments


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation by a square structuring element of the given radius."""
    if radius <= 0:
        return mask.copy()
    struct = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=struct)


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary erosion by a square structuring element of the given radius."""
    if radius <= 0:
        return mask.copy()
    struct = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_erosion(mask, structure=struct)


def resize_bilinear(img: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Bilinear resize sampling at pixel centers."""
    src = img.pixels.astype(np.float64)
    h, w = img.height, img.width
    # map output pixel centers into source coordinates
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[np.newaxis, :, np.newaxis]
    fy = (ys - y0)[:, np.newaxis, np.newaxis]
    tl = src[np.ix_(y0, x0)]
    tr = src[np.ix_(y0, x1)]
    bl = src[np.ix_(y1, x0)]
    br = src[np.ix_(y1, x1)]
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    out = top * (1 - fy) + bot * fy
    return ImageBuffer(np.clip(np.round(out), 0, 255).astype(np.uint8))


def rgb_to_hsv_sv(img: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Saturation and value planes (both in [0, 1]) of an RGB image."""
    if img.channels != 3:
        raise ChannelMismatch("rgb_to_hsv_sv needs a 3-channel image")
    rgb = img.pixels.astype(np.float64) / 255.0
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    sat = np.where(mx > 0, (mx - mn) / np.maximum(mx, 1e-12), 0.0)
    return sat, mx
