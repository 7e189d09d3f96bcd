"""8-bit RGB raster I/O and conversion to/from float feature maps."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import FeatureMap, ShapeError


class ImageError(Exception):
    """An image file could not be read or written."""


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB pixels, interleaved and row-major: ``pixels.shape == (height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


def load_image(path: str | os.PathLike) -> RasterImage:
    """Decode a PNG or JPEG into 8-bit RGB.

    Alpha is composited over white; grayscale is replicated to three channels.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ImageError(f"{path}: unsupported format {im.format!r} (PNG or JPEG expected)")
            im.load()
            if im.mode == "P":
                im = im.convert("RGBA")
            if im.mode in ("RGBA", "LA", "PA") or "transparency" in im.info:
                rgba = im.convert("RGBA")
                background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                im = Image.alpha_composite(background, rgba)
            rgb = np.asarray(im.convert("RGB"))
    except ImageError:
        raise
    except (OSError, UnidentifiedImageError, ValueError, SyntaxError) as exc:
        raise ImageError(f"{path}: cannot decode image ({exc})") from exc
    return RasterImage(rgb)


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def save_png(img: RasterImage, path: str | os.PathLike) -> None:
    """Write ``img`` as PNG atomically (temporary file in the target directory, then rename)."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise ImageError(f"{path}: cannot create output ({exc})") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            Image.fromarray(np.asarray(img.pixels)).save(fh, format="PNG")
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except OSError as exc:
        raise ImageError(f"{path}: cannot write image ({exc})") from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def to_feature_map(img: RasterImage) -> FeatureMap:
    """Planar 3 x H x W map with values byte / 255."""
    return FeatureMap(img.pixels.transpose(2, 0, 1).astype(np.float64) / 255.0)


def quantize(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], scale to 0..255 and round half away from zero."""
    scaled = np.clip(values, 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def from_feature_map(m: FeatureMap) -> RasterImage:
    if m.channels != 3:
        raise ShapeError(f"an RGB image needs 3 channels, got {m.channels}")
    return RasterImage(quantize(m.data).transpose(1, 2, 0))


def _check_dims(w: int, h: int) -> None:
    if w < 1 or h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {w}x{h}")


def _bilinear_taps(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres (align_corners=False), clamped at the borders
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: RasterImage, w: int, h: int) -> RasterImage:
    _check_dims(w, h)
    if (w, h) == (img.width, img.height):
        return img
    x = img.pixels.astype(np.float64)
    y0, y1, fy = _bilinear_taps(img.height, h)
    x0, x1, fx = _bilinear_taps(img.width, w)
    rows = x[y0] * (1 - fy)[:, None, None] + x[y1] * fy[:, None, None]
    out = rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return RasterImage(np.floor(np.clip(out, 0, 255) + 0.5).astype(np.uint8))


def crop(img: RasterImage, left: int, top: int, w: int, h: int) -> RasterImage:
    _check_dims(w, h)
    if left < 0 or top < 0 or left + w > img.width or top + h > img.height:
        raise ValueError(f"crop {w}x{h}+{left}+{top} falls outside a {img.width}x{img.height} image")
    return RasterImage(img.pixels[top:top + h, left:left + w])


def center_crop(img: RasterImage, w: int, h: int) -> RasterImage:
    _check_dims(w, h)
    if w > img.width or h > img.height:
        raise ValueError(f"cannot crop {w}x{h} from a {img.width}x{img.height} image")
    return crop(img, (img.width - w) // 2, (img.height - h) // 2, w, h)


def random_crop(img: RasterImage, w: int, h: int, seed: int = 0) -> RasterImage:
    _check_dims(w, h)
    if w > img.width or h > img.height:
        raise ValueError(f"cannot crop {w}x{h} from a {img.width}x{img.height} image")
    rng = np.random.default_rng(seed)
    left = int(rng.integers(0, img.width - w + 1))
    top = int(rng.integers(0, img.height - h + 1))
    return crop(img, left, top, w, h)
