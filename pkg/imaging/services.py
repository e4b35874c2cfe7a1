"""
Image ingestion and integral-image arithmetic.

Usage:
    from imaging import services as imaging_svc
    img = imaging_svc.read_image(path)
    ip = imaging_svc.build_integral(img)
    total = imaging_svc.rect_sum(ip, Rect(0, 0, img.width, img.height))
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Tuple, Union

import numpy as np

from haarboost_project.exceptions import (
    MalformedHeaderError,
    RectBoundsError,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
)

from .models import GrayImage, IntegralPair, Rect

_WHITESPACE = b" \t\r\n\v\f"
_DIGITS = b"0123456789"

# Largest window edge for which Q*A - S*S stays inside int64 (255**2 * edge**4 < 2**63).
_EXACT_STATS_EDGE = 3000


# ----- PGM / PPM -----

def _skip_blanks(data: bytes, pos: int) -> int:
    """Skip whitespace and '#' comment lines."""
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    return pos


def _read_header(data: bytes) -> Tuple[int, int, int, int, int]:
    """Return (channels, width, height, maxval, payload offset)."""
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise MalformedHeaderError(f"unsupported magic {magic!r}, expected b'P5' or b'P6'", 0)
    if len(data) < 3 or data[2] not in _WHITESPACE + b"#":
        raise MalformedHeaderError("magic must be followed by whitespace", 2)

    pos = 2
    values: list[Tuple[int, int]] = []
    for name in ("width", "height", "maxval"):
        pos = _skip_blanks(data, pos)
        if pos >= len(data):
            raise MalformedHeaderError(f"header ended before {name}", pos)
        start = pos
        while pos < len(data) and data[pos] in _DIGITS:
            pos += 1
        if pos == start:
            raise MalformedHeaderError(f"expected decimal {name}, found {data[pos:pos + 1]!r}", pos)
        if pos < len(data) and data[pos] not in _WHITESPACE + b"#":
            raise MalformedHeaderError(f"unexpected byte {data[pos:pos + 1]!r} after {name}", pos)
        values.append((int(data[start:pos]), start))

    (width, w_at), (height, h_at), (maxval, m_at) = values
    if width < 1:
        raise MalformedHeaderError("width must be at least 1", w_at)
    if height < 1:
        raise MalformedHeaderError("height must be at least 1", h_at)
    if maxval < 1:
        raise MalformedHeaderError("maxval must be at least 1", m_at)
    if maxval > 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} exceeds 255 (16-bit images are not supported)", m_at)

    # Exactly one whitespace byte separates the header from the payload.
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise MalformedHeaderError("missing whitespace after maxval", pos)
    return channels, width, height, maxval, pos + 1


def load_pgm(data: bytes) -> GrayImage:
    """
    Decode a binary PGM (P5) or PPM (P6) file into a grey-level image.

    PPM pixels are converted to luma with integer weights
    (299 R + 587 G + 114 B + 500) // 1000, i.e. 0.299R + 0.587G + 0.114B
    rounded half-up. Intensities are kept as stored (no maxval rescaling).

    Args:
        data: Whole file contents

    Returns:
        GrayImage with the header's dimensions

    Raises:
        MalformedHeaderError, TruncatedPayloadError, UnsupportedMaxvalError
    """
    channels, width, height, _maxval, offset = _read_header(data)
    needed = width * height * channels
    available = len(data) - offset
    if available < needed:
        raise TruncatedPayloadError(
            f"payload holds {available} of {needed} bytes for a {width}x{height} image", len(data)
        )

    raw = np.frombuffer(data, dtype=np.uint8, count=needed, offset=offset)
    if channels == 1:
        pixels = raw.reshape(height, width).copy()
    else:
        rgb = raw.reshape(height, width, 3).astype(np.int64)
        luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
        pixels = luma.astype(np.uint8)
    return GrayImage(width, height, pixels)


def read_image(path: Union[str, Path]) -> GrayImage:
    """Read a PGM/PPM file from disk."""
    return load_pgm(Path(path).read_bytes())


def save_pgm(img: GrayImage) -> bytes:
    """Encode an image as binary PGM (P5, maxval 255)."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def save_ppm(rgb: np.ndarray) -> bytes:
    """Encode a (height, width, 3) uint8 array as binary PPM (P6, maxval 255)."""
    height, width = rgb.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def draw_boxes(img: GrayImage, rects: Iterable[Rect]) -> np.ndarray:
    """Render an RGB copy of ``img`` with 1-px box borders at intensity 255."""
    rgb = np.repeat(img.pixels[:, :, None], 3, axis=2).copy()
    for r in rects:
        x1 = min(r.right, img.width) - 1
        y1 = min(r.bottom, img.height) - 1
        rgb[r.y, r.x:x1 + 1] = 255
        rgb[y1, r.x:x1 + 1] = 255
        rgb[r.y:y1 + 1, r.x] = 255
        rgb[r.y:y1 + 1, x1] = 255
    return rgb


def resize_nearest(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour resample of a 2-D array (exact for integer factors)."""
    src_h, src_w = pixels.shape
    rows = (np.arange(height) * src_h) // height
    cols = (np.arange(width) * src_w) // width
    return pixels[rows[:, None], cols[None, :]]


# ----- Integral images -----

def build_integral(img: GrayImage) -> IntegralPair:
    """
    Build the summed-area tables of an image and of its square in one pass.

    Args:
        img: Source image

    Returns:
        IntegralPair with zero border row/column
    """
    px = img.pixels.astype(np.int64)
    sum_table = np.zeros((img.height + 1, img.width + 1), dtype=np.int64)
    sqsum_table = np.zeros_like(sum_table)
    sum_table[1:, 1:] = px.cumsum(axis=0).cumsum(axis=1)
    sqsum_table[1:, 1:] = (px * px).cumsum(axis=0).cumsum(axis=1)
    return IntegralPair(img.width, img.height, sum_table, sqsum_table)


def build_integral_array(pixels: np.ndarray) -> IntegralPair:
    """Build an IntegralPair straight from a 2-D uint8 array."""
    return build_integral(GrayImage.from_array(pixels))


def _check_bounds(ip: IntegralPair, r: Rect) -> None:
    if not r.fits(ip.width, ip.height):
        raise RectBoundsError(f"rect {r.as_tuple()} exceeds {ip.width}x{ip.height} image")


def rect_sum(ip: IntegralPair, r: Rect) -> int:
    """
    Sum of the pixels inside ``r`` from exactly four table reads.

    Raises:
        RectBoundsError: if the rectangle leaves the image
    """
    _check_bounds(ip, r)
    t = ip.sum_table
    return int(t[r.bottom, r.right] + t[r.y, r.x] - t[r.y, r.right] - t[r.bottom, r.x])


def batch_rect_sums(table: np.ndarray, xs: np.ndarray, ys: np.ndarray, w: int, h: int) -> np.ndarray:
    """Vectorised four-read sums of equally sized rectangles at (xs, ys)."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    return table[ys + h, xs + w] + table[ys, xs] - table[ys, xs + w] - table[ys + h, xs]


def batch_window_stats(
    ip: IntegralPair, xs: np.ndarray, ys: np.ndarray, w: int, h: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and population variance of many equally sized windows.

    Variance is (Q*A - S*S) / A**2 computed on integers when it fits in int64,
    so it is never negative and matches the single-window path bit for bit.
    """
    area = w * h
    s = batch_rect_sums(ip.sum_table, xs, ys, w, h)
    q = batch_rect_sums(ip.sqsum_table, xs, ys, w, h)
    means = s / area
    if max(w, h) <= _EXACT_STATS_EDGE:
        variances = (q * area - s * s) / float(area * area)
    else:
        variances = q / area - means * means
    return means, np.maximum(variances, 0.0)


def window_stats(ip: IntegralPair, r: Rect) -> Tuple[float, float]:
    """
    Mean and population variance (divisor A) of the pixels under ``r``.

    Raises:
        RectBoundsError: if the rectangle leaves the image
    """
    _check_bounds(ip, r)
    means, variances = batch_window_stats(ip, np.array([r.x]), np.array([r.y]), r.w, r.h)
    return float(means[0]), float(variances[0])


def lighting_divisor(variances: np.ndarray) -> np.ndarray:
    """Standard deviation used for lighting correction; constant windows use 1."""
    std = np.sqrt(variances)
    return np.where(std > 0, std, 1.0)
