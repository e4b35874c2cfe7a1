"""
In-memory domain types for grey-level images and their integral tables.

Nothing here is persisted through the ORM. Objects validate themselves on
construction with clean(), raising ValidationError like a model's full_clean().
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from django.core.exceptions import ValidationError


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: top-left offset (x, y) and extent (w, h) in pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        self.clean()

    def clean(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValidationError({"offset": f"Rect offset must be non-negative, got ({self.x}, {self.y})"})
        if self.w < 1 or self.h < 1:
            raise ValidationError({"extent": f"Rect extent must be at least 1x1, got {self.w}x{self.h}"})

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def fits(self, width: int, height: int) -> bool:
        """Check whether the rectangle lies inside a width x height image."""
        return self.right <= width and self.bottom <= height

    def iou(self, other: Rect) -> float:
        """Intersection over union with another rectangle."""
        ix = max(0, min(self.right, other.right) - max(self.x, other.x))
        iy = max(0, min(self.bottom, other.bottom) - max(self.y, other.y))
        inter = ix * iy
        union = self.area + other.area - inter
        return inter / union if union else 0.0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """
    8-bit grey-level image.

    ``pixels`` is a (height, width) uint8 array; ``data`` exposes the same
    intensities as a flat row-major list.
    """

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.clean()
        self.pixels.setflags(write=False)

    def clean(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError({"size": f"Image must be at least 1x1, got {self.width}x{self.height}"})
        if self.pixels.shape != (self.height, self.width):
            raise ValidationError(
                {"pixels": f"Pixel array shape {self.pixels.shape} does not match {self.height}x{self.width}"}
            )
        if self.pixels.dtype != np.uint8:
            raise ValidationError({"pixels": f"Pixel array must be uint8, got {self.pixels.dtype}"})

    @classmethod
    def from_data(cls, width: int, height: int, data: Sequence[int]) -> GrayImage:
        """Build an image from a flat row-major intensity sequence."""
        if len(data) != width * height:
            raise ValidationError({"data": f"Expected {width * height} intensities, got {len(data)}"})
        values = np.asarray(data, dtype=np.int64)
        if values.size and (values.min() < 0 or values.max() > 255):
            raise ValidationError({"data": "Intensities must lie within [0, 255]"})
        return cls(width, height, values.astype(np.uint8).reshape(height, width))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> GrayImage:
        """Build an image from a list of pixel rows."""
        height = len(rows)
        width = len(rows[0]) if height else 0
        return cls.from_data(width, height, [v for row in rows for v in row])

    @classmethod
    def from_array(cls, array: np.ndarray) -> GrayImage:
        """Wrap a 2-D array, clipping and rounding it into the uint8 range."""
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise ValidationError({"pixels": f"Expected a 2-D array, got {arr.ndim} dimensions"})
        if arr.dtype != np.uint8:
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        return cls(arr.shape[1], arr.shape[0], arr.copy())

    @property
    def data(self) -> list[int]:
        return self.pixels.reshape(-1).tolist()


@dataclass(frozen=True, eq=False)
class IntegralPair:
    """
    Summed-area tables of an image and of its square.

    Both tables are int64 arrays of shape (height+1, width+1) indexed
    ``table[y][x]``; row 0 and column 0 are zero so that a rectangle sum is
    always four reads with no edge branches. int64 holds 255 * 2**32 (sum) and
    255**2 * 2**32 (square sum) without overflow.
    """

    width: int
    height: int
    sum_table: np.ndarray
    sqsum_table: np.ndarray

    def __post_init__(self) -> None:
        self.sum_table.setflags(write=False)
        self.sqsum_table.setflags(write=False)

    @property
    def total(self) -> int:
        return int(self.sum_table[self.height, self.width])

    @property
    def total_squares(self) -> int:
        return int(self.sqsum_table[self.height, self.width])
