"""Image decode/encode: PNG and JPEG, 8-bit, sRGB assumed.

Alpha channels are stripped at decode; grayscale files are expanded to
three channels so the rest of the pipeline always sees RGB.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IOFailure
from .imagery import ImageBuffer


def decode_image(path: str | Path) -> ImageBuffer:
    """Load a PNG or JPEG file as a 3-channel ImageBuffer."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise IOFailure(f"cannot decode image {path}: {exc}") from exc
    return ImageBuffer(arr)


def encode_png(img: ImageBuffer, path: str | Path) -> None:
    """Write an ImageBuffer to disk as PNG."""
    px = img.pixels
    if px.shape[2] == 1:
        px = np.repeat(px, 3, axis=2)
    try:
        Image.fromarray(px, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
