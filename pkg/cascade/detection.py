"""
Sliding-window scanning with a trained cascade.

Features are rescaled per window size (one LUT per scale) instead of building
an image pyramid; ``detect_pyramid`` is the pyramid version, kept as an
oracle. Windows are lighting-corrected by their own standard deviation.

Usage:
    from cascade import detection
    hits = detection.detect(model, img, ScanConfig.from_settings())
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

from features import services as feature_svc
from features.managers import LutCacheManager
from features.models import ScaledFeatureLUT
from haarboost_project.context import get_worker_count
from haarboost_project.exceptions import MissingScaleError, RectBoundsError
from imaging import services as imaging_svc
from imaging.models import GrayImage, IntegralPair, Rect

from .models import CascadeModel, Detection, ScanConfig

logger = logging.getLogger(__name__)

# rows of the pairwise IoU matrix computed at once while grouping
_IOU_BLOCK = 512


class StageOutcome(NamedTuple):
    """Per-window result of running the cascade on a batch of windows."""

    accepted: np.ndarray
    scores: np.ndarray
    stages_run: np.ndarray
    reached_final: np.ndarray


def scale_ladder(base: int, width: int, height: int, cfg: ScanConfig) -> List[int]:
    """Window sizes round(start * scale_factor**k) that fit the image, ascending and distinct."""
    start = max(base, cfg.min_window or base)
    limit = min(width, height)
    sizes: List[int] = []
    k = 0
    while True:
        size = int(round(start * cfg.scale_factor ** k))
        if size > limit:
            return sizes
        if not sizes or size > sizes[-1]:
            sizes.append(size)
        k += 1


def window_grid(width: int, height: int, size: int, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top-left corners of every size x size window on the stride grid, row-major."""
    ys, xs = np.meshgrid(
        np.arange(0, height - size + 1, stride, dtype=np.int64),
        np.arange(0, width - size + 1, stride, dtype=np.int64),
        indexing="ij",
    )
    return xs.ravel(), ys.ravel()


def run_stages(
    model: CascadeModel,
    lut: ScaledFeatureLUT,
    ip: IntegralPair,
    xs: np.ndarray,
    ys: np.ndarray,
) -> StageOutcome:
    """
    Evaluate the cascade on windows of size ``lut.window_size``.

    Each stage only sees the windows every earlier stage accepted, and only
    computes the features it reads. A window's score is the score of the
    last stage it reached.
    """
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    n, size = len(xs), lut.window_size
    scores = np.full(n, -np.inf)
    stages_run = np.zeros(n, dtype=np.int64)
    reached_final = np.zeros(n, dtype=bool)
    if not n:
        return StageOutcome(np.zeros(0, dtype=bool), scores, stages_run, reached_final)
    _, variances = imaging_svc.batch_window_stats(ip, xs, ys, size, size)
    stds = imaging_svc.lighting_divisor(variances)

    alive = np.arange(n)
    last = len(model.stages) - 1
    for k, stage in enumerate(model.stages):
        if not len(alive):
            break
        if k == last:
            reached_final[alive] = True
        ids = np.asarray(stage.feature_ids, dtype=np.int64)
        X = feature_svc.evaluate_windows(lut, ip, xs[alive], ys[alive], stds[alive], feature_ids=ids)
        stage_scores = stage.scores(X, ids)
        scores[alive] = stage_scores
        stages_run[alive] += 1
        alive = alive[stage_scores >= stage.threshold]

    accepted = np.zeros(n, dtype=bool)
    accepted[alive] = True
    return StageOutcome(accepted, scores, stages_run, reached_final)


def model_luts(model: CascadeModel, sizes: Sequence[int]) -> Dict[int, ScaledFeatureLUT]:
    return {size: LutCacheManager.get_lut(model.pool, size) for size in sizes}


def cascade_classify(
    model: CascadeModel,
    ip: IntegralPair,
    window: Rect,
    luts: Mapping[int, ScaledFeatureLUT],
) -> Tuple[bool, float, int]:
    """
    Run the cascade on one window.

    Returns:
        (accepted, score, stages_run); score is the last evaluated stage's

    Raises:
        MissingScaleError: if no LUT matches the window size
        RectBoundsError: if the window leaves the image
    """
    if window.w != window.h or window.w not in luts:
        raise MissingScaleError(f"no LUT for a {window.w}x{window.h} window")
    if not window.fits(ip.width, ip.height):
        raise RectBoundsError(f"window {window.as_tuple()} exceeds {ip.width}x{ip.height} image")
    outcome = run_stages(model, luts[window.w], ip, np.array([window.x]), np.array([window.y]))
    return bool(outcome.accepted[0]), float(outcome.scores[0]), int(outcome.stages_run[0])


# ----- Candidates -----

@dataclass(frozen=True, eq=False)
class CandidateSet:
    """
    Windows of one image that passed every stage but the last, with their
    final-stage scores. Sorted by window size, then y, then x.
    """

    base: int
    xs: np.ndarray
    ys: np.ndarray
    sizes: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.scores)

    def hits(self, threshold: float) -> List[Detection]:
        """Candidates whose final-stage score is >= ``threshold``."""
        keep = np.flatnonzero(self.scores >= threshold)
        return [
            Detection(
                Rect(int(self.xs[i]), int(self.ys[i]), int(self.sizes[i]), int(self.sizes[i])),
                float(self.sizes[i]) / self.base,
                float(self.scores[i]),
            )
            for i in keep
        ]


def _scan_size(
    model: CascadeModel, ip: IntegralPair, size: int, cfg: ScanConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lut = LutCacheManager.get_lut(model.pool, size)
    xs, ys = window_grid(ip.width, ip.height, size, cfg.stride(size))
    outcome = run_stages(model, lut, ip, xs, ys)
    keep = outcome.reached_final
    logger.debug(
        f"size {size}: {len(xs)} windows, {int(keep.sum())} reached the last stage, "
        f"{int(outcome.accepted.sum())} accepted"
    )
    return xs[keep], ys[keep], outcome.scores[keep]


def scan_candidates(model: CascadeModel, img: GrayImage, cfg: ScanConfig) -> CandidateSet:
    """
    Scan every scale of the ladder, in parallel over scales (``--jobs``).

    Results are merged in ladder order so any worker count gives the same set.
    """
    sizes = scale_ladder(model.base, img.width, img.height, cfg)
    empty = np.zeros(0, dtype=np.int64)
    if not sizes:
        logger.warning(f"{img.width}x{img.height} image is smaller than the {model.base}px base window")
        return CandidateSet(model.base, empty, empty, empty, np.zeros(0))
    ip = imaging_svc.build_integral(img)
    workers = min(get_worker_count(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda size: _scan_size(model, ip, size, cfg), sizes))
    else:
        results = [_scan_size(model, ip, size, cfg) for size in sizes]
    return CandidateSet(
        model.base,
        np.concatenate([r[0] for r in results]),
        np.concatenate([r[1] for r in results]),
        np.concatenate([np.full(len(r[0]), size, dtype=np.int64) for r, size in zip(results, sizes)]),
        np.concatenate([r[2] for r in results]),
    )


# ----- Merging -----

def _boxes(hits: Sequence[Detection]) -> np.ndarray:
    return np.array([d.rect.as_tuple() for d in hits], dtype=np.int64).reshape(-1, 4)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between (k, 4) and (n, 4) x, y, w, h boxes."""
    ax0, ay0, aw, ah = (a[:, None, i] for i in range(4))
    bx0, by0, bw, bh = (b[None, :, i] for i in range(4))
    ix = np.maximum(0, np.minimum(ax0 + aw, bx0 + bw) - np.maximum(ax0, bx0))
    iy = np.maximum(0, np.minimum(ay0 + ah, by0 + bh) - np.maximum(ay0, by0))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def merge_detections(hits: Sequence[Detection], min_neighbors: int, overlap: float) -> List[Detection]:
    """
    Group raw hits whose IoU is >= ``overlap`` (transitively) and emit one
    detection per group of at least ``min_neighbors`` hits: the average
    rectangle, the mean scale and the best score. Sorted by score descending.
    """
    n = len(hits)
    if not n:
        return []
    boxes = _boxes(hits)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for start in range(0, n, _IOU_BLOCK):
        block = pairwise_iou(boxes[start:start + _IOU_BLOCK], boxes)
        rows, cols = np.nonzero(block >= overlap)
        for i, j in zip((rows + start).tolist(), cols.tolist()):
            if j > i:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: Dict[int, List[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    merged = []
    for members in groups.values():
        if len(members) < min_neighbors:
            continue
        g = boxes[members]
        x0 = int(np.rint(g[:, 0].mean()))
        y0 = int(np.rint(g[:, 1].mean()))
        x1 = int(np.rint((g[:, 0] + g[:, 2]).mean()))
        y1 = int(np.rint((g[:, 1] + g[:, 3]).mean()))
        merged.append(
            Detection(
                Rect(x0, y0, max(1, x1 - x0), max(1, y1 - y0)),
                float(np.mean([hits[i].scale for i in members])),
                max(hits[i].score for i in members),
            )
        )
    merged.sort(key=lambda d: (-d.score, d.rect.y, d.rect.x, d.rect.w))
    return merged


# ----- Detection -----

def detect(model: CascadeModel, img: GrayImage, cfg: ScanConfig) -> List[Detection]:
    """
    Multi-scale detection with rescaled features.

    Returns:
        Merged detections sorted by score descending; empty (with a warning)
        when the image is smaller than the base window
    """
    candidates = scan_candidates(model, img, cfg)
    hits = candidates.hits(model.final_threshold)
    detections = merge_detections(hits, cfg.merge_min_neighbors, cfg.merge_overlap)
    logger.debug(f"{len(hits)} raw hits merged into {len(detections)} detections")
    return detections


def detect_pyramid(model: CascadeModel, img: GrayImage, cfg: ScanConfig) -> List[Detection]:
    """
    Same scan, but each scale downsizes the image (nearest neighbour) and
    evaluates base-size windows; hits are mapped back to source pixels.
    """
    base = model.base
    sizes = scale_ladder(base, img.width, img.height, cfg)
    if not sizes:
        logger.warning(f"{img.width}x{img.height} image is smaller than the {base}px base window")
        return []
    lut = LutCacheManager.get_lut(model.pool, base)
    hits: List[Detection] = []
    for size in sizes:
        factor = size / base
        small_w = int(round(img.width / factor))
        small_h = int(round(img.height / factor))
        if small_w < base or small_h < base:
            continue
        ip = imaging_svc.build_integral_array(imaging_svc.resize_nearest(img.pixels, small_w, small_h))
        xs, ys = window_grid(small_w, small_h, base, cfg.stride(base))
        outcome = run_stages(model, lut, ip, xs, ys)
        for i in np.flatnonzero(outcome.accepted):
            x = min(int(round(xs[i] * factor)), img.width - size)
            y = min(int(round(ys[i] * factor)), img.height - size)
            hits.append(Detection(Rect(x, y, size, size), factor, float(outcome.scores[i])))
    return merge_detections(hits, cfg.merge_min_neighbors, cfg.merge_overlap)
