"""
Evaluation domain types: annotated corpora, ROC points, error tables and
experiment results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from haarboost_project.exceptions import RectBoundsError
from imaging import services as imaging_svc
from imaging.models import GrayImage, Rect


class SyntheticKind(models.TextChoices):
    CROSS = "cross", "Images with planted bright crosses"
    FACES = "faces", "Cross training windows"
    BACKGROUNDS = "backgrounds", "Cross-free background images"
    GAUSSIANS = "gaussians", "Two Gaussian classes"
    MOONS = "moons", "Two interleaved moons"


@dataclass(frozen=True)
class CorpusEntry:
    """One image and its ground-truth rectangles. ``image`` is set for in-memory corpora."""

    path: str
    truths: Tuple[Rect, ...] = ()
    image: Optional[GrayImage] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "truths", tuple(self.truths))
        self.clean()

    def clean(self) -> None:
        if not self.path:
            raise ValidationError({"path": "corpus entries need a path"})
        if self.image is not None:
            check_truths(self.path, self.truths, self.image)


def check_truths(path: str, truths: Sequence[Rect], image: GrayImage) -> None:
    for r in truths:
        if not r.fits(image.width, image.height):
            raise RectBoundsError(f"{path}: truth {r.as_tuple()} exceeds {image.width}x{image.height} image")


@dataclass(frozen=True, eq=False)
class AnnotatedCorpus:
    """Images with face rectangles; relative paths resolve against ``root``."""

    entries: Tuple[CorpusEntry, ...]
    root: Optional[Path] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValidationError({"entries": "each image may appear once; merge its rectangles into one entry"})

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_truths(self) -> int:
        return sum(len(e.truths) for e in self.entries)

    def load_image(self, entry: CorpusEntry) -> GrayImage:
        """The entry's image, read from disk when not held in memory."""
        if entry.image is not None:
            return entry.image
        img = imaging_svc.read_image((self.root or Path(".")) / entry.path)
        check_truths(entry.path, entry.truths, img)
        return img


@dataclass(frozen=True)
class RocPoint:
    false_detections: int
    detection_rate: float
    threshold: float

    def __post_init__(self) -> None:
        if self.false_detections < 0 or not 0.0 <= self.detection_rate <= 1.0:
            raise ValidationError({"point": f"invalid ROC point {self}"})


@dataclass(frozen=True)
class ErrorCell:
    """Miss rate (%) at a false-detection budget; ``None`` when the curve never gets there."""

    model: str
    fd_target: int
    error_rate: Optional[float]
    false_detections: Optional[int] = None

    @property
    def reachable(self) -> bool:
        return self.error_rate is not None

    def formatted(self) -> str:
        return f"{self.error_rate:.2f}" if self.error_rate is not None else "unreachable"


@dataclass(frozen=True, eq=False)
class ErrorTable:
    """Rows are models (in the order given), columns are false-detection targets."""

    models: Tuple[str, ...]
    fd_targets: Tuple[int, ...]
    cells: Tuple[ErrorCell, ...]

    def cell(self, model: str, fd_target: int) -> ErrorCell:
        for c in self.cells:
            if c.model == model and c.fd_target == fd_target:
                return c
        raise KeyError((model, fd_target))

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {"model": c.model, "fd_target": c.fd_target, "error_rate": c.formatted()}
            for c in self.cells
        ]


@dataclass(frozen=True)
class ImbalanceRun:
    seed: int
    boosted_accuracy: float
    single_accuracy: float
    rounds: int
    sigma_ini: float


@dataclass(frozen=True, eq=False)
class ImbalanceResult:
    """AdaBoostSVM against one fixed-width RBF-SVM on imbalanced data, one run per seed."""

    ratio: float
    runs: Tuple[ImbalanceRun, ...]

    @property
    def boosted_mean(self) -> float:
        return float(np.mean([r.boosted_accuracy for r in self.runs]))

    @property
    def single_mean(self) -> float:
        return float(np.mean([r.single_accuracy for r in self.runs]))

    @property
    def boosted_wins(self) -> int:
        """Seeds where the ensemble is at least as accurate as the single SVM."""
        return sum(r.boosted_accuracy >= r.single_accuracy for r in self.runs)
