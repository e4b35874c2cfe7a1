"""
Desk-scale data generators.

The image generators draw a "face" as a bright 3 x 3 cross (the middle row
and column of a 3 x 3 grid bright, the corners dark) on uniform noise.
Backgrounds may carry single bright bars as distractors; bars never touch
each other, so no background contains a cross.

Every generator is deterministic given its seed.
"""

from __future__ import annotations

import math
from typing import Any, List, Optional, Sequence, Union

import numpy as np
from django.core.exceptions import ValidationError

from cascade.detection import scale_ladder
from cascade.models import ScanConfig
from imaging.models import GrayImage, Rect
from svm.models import Dataset

from .models import AnnotatedCorpus, CorpusEntry, SyntheticKind

DARK = (0, 60)
BRIGHT = (190, 255)
# attempts per object before placement is declared impossible
_PLACEMENT_TRIES = 1000


def _uniform(rng: np.random.Generator, bounds, shape) -> np.ndarray:
    return rng.integers(bounds[0], bounds[1] + 1, size=shape).astype(np.uint8)


def render_cross(size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, size) cross: middle third row and column bright, the rest dark."""
    if size < 3:
        raise ValidationError({"size": f"a cross needs at least 3 pixels, got {size}"})
    a, b = int(round(size / 3)), int(round(2 * size / 3))
    out = _uniform(rng, DARK, (size, size))
    bright = _uniform(rng, BRIGHT, (size, size))
    mask = np.zeros((size, size), dtype=bool)
    mask[a:b, :] = True
    mask[:, a:b] = True
    out[mask] = bright[mask]
    return out


def face_windows(n: int, base: int, seed: int, jitter: Optional[int] = None) -> np.ndarray:
    """
    ``n`` training windows of a base-size cross shifted by up to ``jitter``
    pixels each way (default base // 10), the uncovered border filled with
    background noise.
    """
    j = max(1, base // 10) if jitter is None else int(jitter)
    rng = np.random.default_rng(seed)
    out = np.empty((n, base, base), dtype=np.uint8)
    for i in range(n):
        canvas = rng.integers(0, 256, size=(base + 2 * j, base + 2 * j)).astype(np.uint8)
        canvas[j:j + base, j:j + base] = render_cross(base, rng)
        dx, dy = (int(v) for v in rng.integers(-j, j + 1, size=2))
        out[i] = canvas[j + dy:j + dy + base, j + dx:j + dx + base]
    return out


def _clear_of(r: Rect, others: Sequence[Rect], margin: int) -> bool:
    return all(
        r.right + margin <= o.x or o.right + margin <= r.x or r.bottom + margin <= o.y or o.bottom + margin <= r.y
        for o in others
    )


def _add_bars(pixels: np.ndarray, count: int, rng: np.random.Generator, avoid: List[Rect]) -> None:
    height, width = pixels.shape
    placed: List[Rect] = []
    for _ in range(count):
        for _ in range(_PLACEMENT_TRIES):
            thickness = int(rng.integers(6, 14))
            length = int(min(rng.integers(24, 64), width, height))
            w, h = (length, thickness) if rng.integers(2) else (thickness, length)
            r = Rect(int(rng.integers(0, width - w + 1)), int(rng.integers(0, height - h + 1)), w, h)
            if _clear_of(r, avoid, 8) and _clear_of(r, placed, 8):
                break
        else:
            return
        placed.append(r)
        pixels[r.y:r.bottom, r.x:r.right] = _uniform(rng, BRIGHT, (r.h, r.w))


def background_image(width: int, height: int, rng: np.random.Generator, distractors: int = 2) -> GrayImage:
    """Uniform noise with up to ``distractors`` non-touching bright bars."""
    pixels = rng.integers(0, 256, size=(height, width)).astype(np.uint8)
    _add_bars(pixels, distractors, rng, [])
    return GrayImage.from_array(pixels)


def background_images(n: int, width: int, height: int, seed: int, distractors: int = 2) -> List[GrayImage]:
    rng = np.random.default_rng(seed)
    return [background_image(width, height, rng, distractors) for _ in range(n)]


def cross_corpus(
    n_images: int,
    targets: int,
    seed: int,
    base: int = 32,
    width: int = 128,
    height: int = 128,
    distractors: int = 2,
    scan: Optional[ScanConfig] = None,
) -> AnnotatedCorpus:
    """
    Images with ``targets`` planted crosses each, recorded as ground truth.

    Image k draws from child k of ``SeedSequence(seed)``, so the first k images
    do not depend on ``n_images``. Target sizes are the first three sizes of
    the scan ladder and positions lie on that size's stride grid.
    """
    if n_images < 1 or targets < 0:
        raise ValidationError({"n_images": "need at least one image and a non-negative target count"})
    scan = scan or ScanConfig.from_settings()
    sizes = scale_ladder(base, width, height, scan)[:3]
    if not sizes:
        raise ValidationError({"size": f"{width}x{height} images cannot hold a {base}px target"})
    entries = []
    for k, stream in enumerate(np.random.SeedSequence(seed).spawn(n_images)):
        rng = np.random.default_rng(stream)
        pixels = rng.integers(0, 256, size=(height, width)).astype(np.uint8)
        truths: List[Rect] = []
        for _ in range(targets):
            for _ in range(_PLACEMENT_TRIES):
                size = sizes[int(rng.integers(len(sizes)))]
                stride = scan.stride(size)
                x = int(rng.integers(0, (width - size) // stride + 1)) * stride
                y = int(rng.integers(0, (height - size) // stride + 1)) * stride
                r = Rect(x, y, size, size)
                if _clear_of(r, truths, 4):
                    break
            else:
                raise ValidationError({"targets": f"cannot place {targets} targets in a {width}x{height} image"})
            truths.append(r)
            pixels[r.y:r.bottom, r.x:r.right] = render_cross(size, rng)
        _add_bars(pixels, distractors, rng, truths)
        entries.append(CorpusEntry(f"img_{k:03d}.pgm", tuple(truths), GrayImage.from_array(pixels)))
    return AnnotatedCorpus(tuple(entries))


def two_gaussians(n: int, ratio: float, seed: Union[int, Sequence[int]], gap: float = 2.0, dimension: int = 2) -> Dataset:
    """
    Unit-variance Gaussian classes whose means are ``gap`` apart.

    The minority class (+1) has ceil(n / (ratio + 1)) points.
    """
    if n < 2 or ratio < 1:
        raise ValidationError({"ratio": f"need n >= 2 and ratio >= 1, got n={n}, ratio={ratio}"})
    rng = np.random.default_rng(seed)
    minority = math.ceil(n / (ratio + 1))
    majority = n - minority
    offset = np.full(dimension, gap / math.sqrt(dimension))
    points = np.vstack([
        rng.normal(0.0, 1.0, size=(majority, dimension)),
        rng.normal(0.0, 1.0, size=(minority, dimension)) + offset,
    ])
    labels = np.concatenate([-np.ones(majority), np.ones(minority)])
    order = rng.permutation(n)
    return Dataset(points[order], labels[order])


def two_moons(n: int, noise: float, seed: Union[int, Sequence[int]]) -> Dataset:
    """Two interleaving half circles with Gaussian noise; the outer moon is -1."""
    if n < 2 or noise < 0:
        raise ValidationError({"noise": f"need n >= 2 and noise >= 0, got n={n}, noise={noise}"})
    rng = np.random.default_rng(seed)
    n_out = n - n // 2
    n_in = n // 2
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    points = np.vstack([
        np.stack([np.cos(t_out), np.sin(t_out)], axis=1),
        np.stack([1 - np.cos(t_in), 1 - np.sin(t_in) - 0.5], axis=1),
    ])
    points += rng.normal(scale=noise, size=points.shape)
    labels = np.concatenate([-np.ones(n_out), np.ones(n_in)])
    order = rng.permutation(n)
    return Dataset(points[order], labels[order])


def gen_synthetic(kind: str, seed: int, **params: Any):
    """
    Dispatch to a generator by kind.

    Returns:
        AnnotatedCorpus (cross), (n, base, base) windows (faces), a list of
        images (backgrounds) or a Dataset (gaussians, moons)
    """
    kind = SyntheticKind(kind)
    if kind == SyntheticKind.CROSS:
        return cross_corpus(params.pop("n_images", 5), params.pop("targets", 3), seed, **params)
    if kind == SyntheticKind.FACES:
        return face_windows(params.pop("n", 200), params.pop("base", 32), seed, **params)
    if kind == SyntheticKind.BACKGROUNDS:
        return background_images(params.pop("n", 20), params.pop("width", 128), params.pop("height", 128), seed, **params)
    if kind == SyntheticKind.GAUSSIANS:
        return two_gaussians(params.pop("n", 400), params.pop("ratio", 10), seed, **params)
    return two_moons(params.pop("n", 200), params.pop("noise", 0.1), seed)
