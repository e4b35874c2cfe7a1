"""
Haar feature pool, single features and per-scale lookup tables.

Sub-rectangle layout and colouring per kind (value = grey - white, each
sub-rectangle normalised by its own area):

    TWO_RECT_HORIZONTAL     TWO_RECT_VERTICAL    THREE_RECT            FOUR_RECT
    +-------+-------+       +-------------+      +----+----+----+      +------+------+
    | grey  | white |       |    grey     |      |grey|white|grey|      | grey |white |
    |  +1   |  -1   |       |     +1      |      | +1 | -2 | +1 |      |  +1  |  -1  |
    +-------+-------+       +-------------+      +----+----+----+      +------+------+
                            |    white    |                            |white | grey |
                            |     -1      |                            |  -1  |  +1  |
                            +-------------+                            +------+------+

The middle strip of THREE_RECT counts twice so grey and white weights balance
and a constant window evaluates to 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from imaging.models import Rect


class FeatureKind(models.TextChoices):
    """Feature families in enumeration order."""

    TWO_RECT_HORIZONTAL = "two_rect_horizontal", "Two rectangles, side by side"
    TWO_RECT_VERTICAL = "two_rect_vertical", "Two rectangles, stacked"
    THREE_RECT = "three_rect", "Three vertical strips"
    FOUR_RECT = "four_rect", "Four quadrants"


KIND_ORDER: List[FeatureKind] = [
    FeatureKind.TWO_RECT_HORIZONTAL,
    FeatureKind.TWO_RECT_VERTICAL,
    FeatureKind.THREE_RECT,
    FeatureKind.FOUR_RECT,
]

# (width divisor, height divisor) per kind, indexed like KIND_ORDER
KIND_DIVISORS: List[Tuple[int, int]] = [(2, 1), (1, 2), (3, 1), (2, 2)]


def kind_code(kind: str) -> int:
    return KIND_ORDER.index(FeatureKind(kind))


@dataclass(frozen=True)
class HaarFeature:
    """One rectangle feature: its pool ID, kind and bounding box in the base window."""

    feature_id: int
    kind: FeatureKind
    anchor: Rect

    def __post_init__(self) -> None:
        self.clean()

    def clean(self) -> None:
        wdiv, hdiv = KIND_DIVISORS[kind_code(self.kind)]
        if self.anchor.w % wdiv:
            raise ValidationError({"anchor": f"{self.kind} width must be divisible by {wdiv}"})
        if self.anchor.h % hdiv:
            raise ValidationError({"anchor": f"{self.kind} height must be divisible by {hdiv}"})

    def sub_rects(self) -> List[Tuple[Rect, int]]:
        """Sub-rectangles with their weights (+1 grey, -1/-2 white)."""
        rects, coefs = sub_rect_arrays(
            np.array([kind_code(self.kind)]), np.array([self.anchor.as_tuple()])
        )
        return [
            (Rect(*(int(v) for v in rects[0, k])), int(coefs[0, k]))
            for k in range(4)
            if coefs[0, k] != 0
        ]


def sub_rect_arrays(kinds: np.ndarray, anchors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Derive sub-rectangles for many features at once.

    Args:
        kinds: (n,) kind codes
        anchors: (n, 4) x, y, w, h

    Returns:
        rects (n, 4, 4) int64 x, y, w, h per slot and coefs (n, 4) int64; unused
        slots are all zero.
    """
    n = len(kinds)
    rects = np.zeros((n, 4, 4), dtype=np.int64)
    coefs = np.zeros((n, 4), dtype=np.int64)
    x, y, w, h = (anchors[:, i].astype(np.int64) for i in range(4))

    def put(mask, slot, rx, ry, rw, rh, coef):
        rects[mask, slot] = np.stack([rx[mask], ry[mask], rw[mask], rh[mask]], axis=1)
        coefs[mask, slot] = coef

    half_w, half_h, third_w = w // 2, h // 2, w // 3

    m = kinds == 0
    put(m, 0, x, y, half_w, h, 1)
    put(m, 1, x + half_w, y, half_w, h, -1)

    m = kinds == 1
    put(m, 0, x, y, w, half_h, 1)
    put(m, 1, x, y + half_h, w, half_h, -1)

    m = kinds == 2
    put(m, 0, x, y, third_w, h, 1)
    put(m, 1, x + third_w, y, third_w, h, -2)
    put(m, 2, x + 2 * third_w, y, third_w, h, 1)

    m = kinds == 3
    put(m, 0, x, y, half_w, half_h, 1)
    put(m, 1, x + half_w, y, half_w, half_h, -1)
    put(m, 2, x, y + half_h, half_w, half_h, -1)
    put(m, 3, x + half_w, y + half_h, half_w, half_h, 1)
    return rects, coefs


def pool_digest(base: int, kinds: np.ndarray, anchors: np.ndarray) -> str:
    """Checksum of a full enumeration; binds models to the pool they were trained on."""
    h = hashlib.sha256()
    h.update(f"haar-pool:v1:base={base}:count={len(kinds)}".encode("ascii"))
    h.update(np.ascontiguousarray(kinds, dtype="<i1").tobytes())
    h.update(np.ascontiguousarray(anchors, dtype="<i4").tobytes())
    return h.hexdigest()


def _positions(ids: np.ndarray, wanted: Iterable[int]) -> np.ndarray:
    wanted_arr = np.asarray(list(wanted) if not isinstance(wanted, np.ndarray) else wanted, dtype=np.int64)
    pos = np.searchsorted(ids, wanted_arr)
    pos = np.minimum(pos, max(len(ids) - 1, 0))
    if len(ids) == 0 or not np.array_equal(ids[pos], wanted_arr):
        missing = sorted(set(wanted_arr.tolist()) - set(ids.tolist()))
        raise KeyError(f"feature ids not available: {missing[:5]}")
    return pos


@dataclass(frozen=True, eq=False)
class FeaturePool:
    """
    Ordered feature set for a base window.

    A full pool comes from enumerate_pool(); ``subset()`` keeps the original
    IDs (enumeration indices) so models can carry only the features they use.
    ``ids`` is always sorted ascending.
    """

    base: int
    kinds: np.ndarray
    anchors: np.ndarray
    ids: np.ndarray
    full_size: int
    digest: str

    def __post_init__(self) -> None:
        for arr in (self.kinds, self.anchors, self.ids):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, position: int) -> HaarFeature:
        x, y, w, h = (int(v) for v in self.anchors[position])
        return HaarFeature(int(self.ids[position]), KIND_ORDER[int(self.kinds[position])], Rect(x, y, w, h))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def is_full(self) -> bool:
        return len(self.ids) == self.full_size

    @property
    def cache_key(self) -> str:
        if self.is_full:
            return self.digest[:24]
        return f"{self.digest[:16]}-{hashlib.sha1(self.ids.tobytes()).hexdigest()[:12]}"

    def positions(self, feature_ids: Iterable[int]) -> np.ndarray:
        return _positions(self.ids, feature_ids)

    def feature(self, feature_id: int) -> HaarFeature:
        return self[int(self.positions([feature_id])[0])]

    def subset(self, feature_ids: Iterable[int]) -> FeaturePool:
        """Compact pool holding only ``feature_ids`` (deduplicated, ascending)."""
        wanted = np.unique(np.asarray(list(feature_ids), dtype=np.int64))
        pos = self.positions(wanted)
        return FeaturePool(
            self.base,
            self.kinds[pos].copy(),
            self.anchors[pos].copy(),
            wanted,
            self.full_size,
            self.digest,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": self.base,
            "full_size": self.full_size,
            "digest": self.digest,
            "features": [
                [int(i), KIND_ORDER[int(k)].value, *(int(v) for v in a)]
                for i, k, a in zip(self.ids, self.kinds, self.anchors)
            ],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> FeaturePool:
        rows = payload["features"]
        ids = np.array([r[0] for r in rows], dtype=np.int64)
        kinds = np.array([kind_code(r[1]) for r in rows], dtype=np.int8)
        anchors = np.array([r[2:6] for r in rows], dtype=np.int32).reshape(-1, 4)
        if len(ids) > 1 and not (np.diff(ids) > 0).all():
            raise ValidationError({"features": "feature ids must be strictly ascending"})
        if len(ids) and (ids[0] < 0 or ids[-1] >= payload["full_size"]):
            raise ValidationError({"features": "feature id outside the pool"})
        base = int(payload["base"])
        for kind, anchor in zip(kinds, anchors):
            rect = Rect(*(int(v) for v in anchor))
            if not rect.fits(base, base):
                raise ValidationError({"features": f"anchor {rect.as_tuple()} leaves the {base}x{base} window"})
            HaarFeature(0, KIND_ORDER[int(kind)], rect)
        return cls(base, kinds, anchors, ids, int(payload["full_size"]), payload["digest"])


@dataclass(frozen=True, eq=False)
class ScaledFeatureLUT:
    """
    Rescaled sub-rectangles of a pool for one window size.

    ``rects`` are (n, 4, 4) x, y, w, h offsets relative to the window's
    top-left; ``areas`` the true rescaled areas; ``weights`` = coef / area
    (0 for unused or zero-area slots). ``degraded`` marks features with a
    sub-rectangle that vanished after rounding.
    """

    scale: Fraction
    base: int
    window_size: int
    ids: np.ndarray
    anchors: np.ndarray
    rects: np.ndarray
    areas: np.ndarray
    weights: np.ndarray
    degraded: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for arr in (self.ids, self.anchors, self.rects, self.areas, self.weights, self.degraded):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    def positions(self, feature_ids: Iterable[int]) -> np.ndarray:
        return _positions(self.ids, feature_ids)
