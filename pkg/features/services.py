"""
Feature pool enumeration, per-scale lookup tables and feature evaluation.

Feature values are area-normalised mean differences divided by the window's
standard deviation (lighting correction), so a feature read through a scaled
LUT on a larger window is directly comparable with the base-window value.

Usage:
    from features import services as feature_svc
    pool = feature_svc.enumerate_pool(32)
    lut = feature_svc.build_lut_for_size(pool, 40)
    values = feature_svc.evaluate_windows(lut, ip, xs, ys)
"""

from __future__ import annotations

import logging
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from django.conf import settings

from haarboost_project.exceptions import MissingScaleError, RectBoundsError
from imaging import services as imaging_svc
from imaging.models import IntegralPair, Rect

from .models import (
    KIND_DIVISORS,
    FeaturePool,
    HaarFeature,
    ScaledFeatureLUT,
    pool_digest,
    sub_rect_arrays,
)

logger = logging.getLogger(__name__)


def _chunk_size() -> int:
    return int(settings.HAARBOOST["FEATURES"]["FEATURE_CHUNK"])


# ----- Pool -----

def _strip_count(base: int, divisor: int) -> int:
    """Number of (offset, extent) pairs along one axis with extent divisible by ``divisor``."""
    return sum(base - divisor * m + 1 for m in range(1, base // divisor + 1))


def pool_size(base: int) -> int:
    """Closed-form size of the exhaustive pool for a base window."""
    return sum(_strip_count(base, wdiv) * _strip_count(base, hdiv) for wdiv, hdiv in KIND_DIVISORS)


@lru_cache(maxsize=8)
def enumerate_pool(base: int) -> FeaturePool:
    """
    Enumerate every legal feature of the four kinds in a base x base window.

    Order is kind-major, then y, x, h, w ascending; the position in that order
    is the feature ID.

    Args:
        base: Window edge length in pixels (>= 1)

    Returns:
        Immutable FeaturePool (memoised per base)
    """
    kinds_parts = []
    anchor_parts = []
    coords = np.arange(base)
    for code, (wdiv, hdiv) in enumerate(KIND_DIVISORS):
        ws = np.arange(wdiv, base + 1, wdiv)
        hs = np.arange(hdiv, base + 1, hdiv)
        if not len(ws) or not len(hs):
            continue
        y, x, h, w = np.meshgrid(coords, coords, hs, ws, indexing="ij")
        legal = (x + w <= base) & (y + h <= base)
        block = np.stack([x[legal], y[legal], w[legal], h[legal]], axis=1).astype(np.int32)
        anchor_parts.append(block)
        kinds_parts.append(np.full(len(block), code, dtype=np.int8))

    kinds = np.concatenate(kinds_parts) if kinds_parts else np.zeros(0, dtype=np.int8)
    anchors = np.concatenate(anchor_parts) if anchor_parts else np.zeros((0, 4), dtype=np.int32)
    ids = np.arange(len(kinds), dtype=np.int64)
    return FeaturePool(base, kinds, anchors, ids, len(kinds), pool_digest(base, kinds, anchors))


# ----- Lookup tables -----

def _as_fraction(scale: Union[float, Fraction]) -> Fraction:
    if isinstance(scale, Fraction):
        return scale
    return Fraction(scale).limit_denominator(1_000_000)


def _round_half_even_div(num: np.ndarray, den: int) -> np.ndarray:
    """Exact round(num / den) with ties to even, on integers."""
    q, r = np.divmod(num, den)
    twice = 2 * r
    up = (twice > den) | ((twice == den) & (q % 2 == 1))
    return q + up.astype(np.int64)


def scale_rects(rects: np.ndarray, scale: Union[float, Fraction], window_size: int) -> np.ndarray:
    """
    Rescale (..., 4) x, y, w, h integer rectangles.

    Each coordinate is rounded to nearest (ties to even) independently, then
    the rectangle is clamped to the window; clamping can leave a zero extent.
    """
    s = _as_fraction(scale)
    scaled = _round_half_even_div(np.asarray(rects, dtype=np.int64) * s.numerator, s.denominator)
    x = np.minimum(scaled[..., 0], window_size)
    y = np.minimum(scaled[..., 1], window_size)
    w = np.minimum(scaled[..., 2], window_size - x)
    h = np.minimum(scaled[..., 3], window_size - y)
    return np.stack([x, y, w, h], axis=-1)


def build_lut(pool: FeaturePool, scale: Union[float, Fraction]) -> ScaledFeatureLUT:
    """
    Rescale every feature of ``pool`` for windows of edge base * scale.

    Args:
        pool: Full or compact pool
        scale: Factor >= 1

    Returns:
        ScaledFeatureLUT with window-relative sub-rectangles and exact areas
    """
    s = _as_fraction(scale)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {float(s)}")
    window_size = int(_round_half_even_div(np.array([pool.base * s.numerator]), s.denominator)[0])

    rects, coefs = sub_rect_arrays(pool.kinds, pool.anchors)
    scaled = scale_rects(rects, s, window_size)
    scaled[coefs == 0] = 0
    areas = scaled[..., 2] * scaled[..., 3]
    weights = np.divide(
        coefs.astype(np.float64), areas, out=np.zeros(coefs.shape, dtype=np.float64), where=areas > 0
    )
    degraded = ((coefs != 0) & (areas == 0)).any(axis=1)
    if degraded.any():
        logger.debug(f"{int(degraded.sum())} features degraded at window size {window_size}")
    return ScaledFeatureLUT(
        s,
        pool.base,
        window_size,
        pool.ids.copy(),
        scale_rects(pool.anchors, s, window_size),
        scaled,
        areas,
        weights,
        degraded,
    )


def build_lut_for_size(pool: FeaturePool, window_size: int) -> ScaledFeatureLUT:
    """LUT whose window is exactly ``window_size`` pixels wide."""
    return build_lut(pool, Fraction(window_size, pool.base))


# ----- Evaluation -----

def _evaluate(
    tables: np.ndarray,
    table_idx: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    rects: np.ndarray,
    weights: np.ndarray,
    stds: np.ndarray,
) -> np.ndarray:
    n_windows, n_features = len(xs), len(rects)
    out = np.empty((n_windows, n_features), dtype=np.float64)
    step = max(1, _chunk_size() // max(1, n_features * 4))
    rx, ry, rw, rh = (rects[None, :, :, i] for i in range(4))
    for start in range(0, n_windows, step):
        sl = slice(start, start + step)
        t = table_idx[sl, None, None]
        x0 = xs[sl, None, None] + rx
        y0 = ys[sl, None, None] + ry
        x1 = x0 + rw
        y1 = y0 + rh
        sums = tables[t, y1, x1] + tables[t, y0, x0] - tables[t, y0, x1] - tables[t, y1, x0]
        out[sl] = (sums * weights[None]).sum(axis=2) / stds[sl, None]
    return out


def _lut_slice(lut: ScaledFeatureLUT, feature_ids: Optional[Iterable[int]]):
    if feature_ids is None:
        return lut.rects, lut.weights
    pos = lut.positions(feature_ids)
    return lut.rects[pos], lut.weights[pos]


def evaluate_windows(
    lut: ScaledFeatureLUT,
    ip: IntegralPair,
    xs: Sequence[int],
    ys: Sequence[int],
    stds: Optional[Sequence[float]] = None,
    feature_ids: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """
    Evaluate features on many windows of size ``lut.window_size`` in one image.

    Args:
        lut: LUT for the window size
        ip: Integral tables of the image
        xs, ys: Window top-left corners
        stds: Lighting divisors; computed from the windows when omitted
        feature_ids: Restrict to these IDs (columns follow this order)

    Returns:
        (n_windows, n_features) array
    """
    xs_arr = np.asarray(xs, dtype=np.int64)
    ys_arr = np.asarray(ys, dtype=np.int64)
    size = lut.window_size
    if len(xs_arr) and (
        xs_arr.min() < 0 or ys_arr.min() < 0
        or xs_arr.max() + size > ip.width or ys_arr.max() + size > ip.height
    ):
        raise RectBoundsError(f"window of size {size} leaves the {ip.width}x{ip.height} image")
    if stds is None:
        _, variances = imaging_svc.batch_window_stats(ip, xs_arr, ys_arr, size, size)
        stds_arr = imaging_svc.lighting_divisor(variances)
    else:
        stds_arr = np.asarray(stds, dtype=np.float64)
    rects, weights = _lut_slice(lut, feature_ids)
    return _evaluate(
        ip.sum_table[None], np.zeros(len(xs_arr), dtype=np.int64), xs_arr, ys_arr, rects, weights, stds_arr
    )


def feature_matrix(
    lut: ScaledFeatureLUT,
    windows: np.ndarray,
    feature_ids: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """
    Evaluate features on a stack of cropped square windows.

    Args:
        lut: LUT whose window size equals the crops' edge
        windows: (n, size, size) uint8 crops
        feature_ids: Restrict to these IDs

    Returns:
        (n, n_features) array, each row lighting-corrected by its own window
    """
    windows = np.asarray(windows)
    n, size = len(windows), lut.window_size
    if windows.shape[1:] != (size, size):
        raise MissingScaleError(f"windows of shape {windows.shape[1:]} do not match LUT size {size}")
    px = windows.astype(np.int64)
    tables = np.zeros((n, size + 1, size + 1), dtype=np.int64)
    tables[:, 1:, 1:] = px.cumsum(axis=1).cumsum(axis=2)
    area = size * size
    s = tables[:, size, size]
    q = (px * px).reshape(n, -1).sum(axis=1)
    variances = np.maximum((q * area - s * s) / float(area * area), 0.0)
    rects, weights = _lut_slice(lut, feature_ids)
    zeros = np.zeros(n, dtype=np.int64)
    return _evaluate(
        tables, np.arange(n), zeros, zeros, rects, weights, imaging_svc.lighting_divisor(variances)
    )


def eval_feature(
    f: HaarFeature,
    ip: IntegralPair,
    window: Rect,
    lut: ScaledFeatureLUT,
    window_std: float,
) -> float:
    """
    Value of one feature on one window.

    Each sub-rectangle sum is divided by its own rescaled area, weighted
    (grey positive, white negative) and the total divided by ``window_std``.
    A sub-rectangle that vanished after rounding contributes 0 and the feature
    is flagged in ``lut.degraded``.

    Raises:
        MissingScaleError: if the window does not match the LUT size
        RectBoundsError: if the window leaves the image
    """
    if window.w != lut.window_size or window.h != lut.window_size:
        raise MissingScaleError(
            f"window {window.w}x{window.h} does not match LUT size {lut.window_size}"
        )
    if lut.degraded[lut.positions([f.feature_id])[0]]:
        logger.debug(f"feature {f.feature_id} is degraded at window size {lut.window_size}")
    std = window_std if window_std > 0 else 1.0
    values = evaluate_windows(lut, ip, [window.x], [window.y], [std], feature_ids=[f.feature_id])
    return float(values[0, 0])
