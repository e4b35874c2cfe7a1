"""
Cascade domain types: the trained detector, scan and training configuration,
per-stage training reports and detections.

Stage thresholds may be +inf (a stage that rejects everything), so reals
that can be infinite go through encode_real()/decode_real() on their way to
JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple, Union

from django.conf import settings
from django.core.exceptions import ValidationError

from boosting.models import LearnerFamily, StrongClassifier
from features.models import FeaturePool
from imaging.models import Rect


def encode_real(value: float) -> Union[float, str]:
    if math.isnan(value):
        raise ValidationError({"value": "NaN cannot be stored"})
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)


def decode_real(value: Union[float, int, str]) -> float:
    if isinstance(value, str):
        if value not in ("inf", "-inf"):
            raise ValidationError({"value": f"unexpected real {value!r}"})
        return math.inf if value == "inf" else -math.inf
    return float(value)


@dataclass(frozen=True, eq=False)
class CascadeModel:
    """
    Ordered strong classifiers over a compact feature pool.

    ``pool`` holds only the features the stages read, under their IDs in the
    full enumeration for ``pool.base``; its digest binds the model to that
    enumeration.
    """

    pool: FeaturePool
    stages: Tuple[StrongClassifier, ...]
    training_meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        self.clean()

    def clean(self) -> None:
        if not self.stages:
            raise ValidationError({"stages": "a cascade needs at least one stage"})
        known = set(self.pool.ids.tolist())
        missing = [f for f in self.feature_ids if f not in known]
        if missing:
            raise ValidationError({"stages": f"stages reference features outside the pool: {missing[:5]}"})
        if any(f >= self.pool.full_size for f in self.feature_ids):
            raise ValidationError({"stages": f"feature id beyond the pool size {self.pool.full_size}"})

    def __len__(self) -> int:
        return len(self.stages)

    @property
    def base(self) -> int:
        return self.pool.base

    @property
    def pool_digest(self) -> str:
        return self.pool.digest

    @property
    def feature_ids(self) -> List[int]:
        return sorted({f for stage in self.stages for f in stage.feature_ids})

    @property
    def final_threshold(self) -> float:
        return self.stages[-1].threshold

    def prefix(self, n_stages: int) -> CascadeModel:
        """The first ``n_stages`` stages as a cascade of their own."""
        return replace(self, stages=self.stages[:n_stages])


@dataclass(frozen=True)
class Detection:
    """A window reported by the detector, in source-image pixels."""

    rect: Rect
    scale: float
    score: float

    def as_row(self, path: str) -> Dict[str, Any]:
        return {
            "path": path,
            "x": self.rect.x,
            "y": self.rect.y,
            "w": self.rect.w,
            "h": self.rect.h,
            "score": repr(float(self.score)),
        }


@dataclass(frozen=True)
class ScanConfig:
    """
    Sliding-window parameters. Windows grow by ``scale_factor`` from the base
    size (or ``min_window`` when larger); the stride is ``step_fraction`` of
    the current window, at least one pixel.
    """

    scale_factor: float = 1.25
    step_fraction: float = 0.05
    min_window: Optional[int] = None
    merge_min_neighbors: int = 2
    merge_overlap: float = 0.3

    def __post_init__(self) -> None:
        self.clean()

    def clean(self) -> None:
        errors = {}
        if not self.scale_factor > 1:
            errors["scale_factor"] = f"scale_factor must exceed 1, got {self.scale_factor}"
        if not self.step_fraction > 0:
            errors["step_fraction"] = "step_fraction must be positive"
        if self.min_window is not None and self.min_window < 1:
            errors["min_window"] = "min_window must be positive"
        if self.merge_min_neighbors < 1:
            errors["merge_min_neighbors"] = "merge_min_neighbors must be at least 1"
        if not 0 < self.merge_overlap <= 1:
            errors["merge_overlap"] = "merge_overlap must lie in (0, 1]"
        if errors:
            raise ValidationError(errors)

    def stride(self, window_size: int) -> int:
        return max(1, int(self.step_fraction * window_size))

    @classmethod
    def from_settings(cls, **overrides: Any) -> ScanConfig:
        conf = settings.HAARBOOST["CASCADE"]
        values: Dict[str, Any] = {
            "scale_factor": conf["SCALE_FACTOR"],
            "step_fraction": conf["STEP_FRACTION"],
            "merge_min_neighbors": conf["MERGE_MIN_NEIGHBORS"],
            "merge_overlap": conf["MERGE_OVERLAP"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scale_factor": self.scale_factor,
            "step_fraction": self.step_fraction,
            "min_window": self.min_window,
            "merge_min_neighbors": self.merge_min_neighbors,
            "merge_overlap": self.merge_overlap,
        }


@dataclass(frozen=True)
class CascadeTrainingConfig:
    """
    Stage goals and limits for train_cascade.

    Each stage must keep ``d_min`` of the validation faces and pass at most
    ``f_max`` of the validation negatives; stages are added until the
    product of stage false-positive rates is at most ``target_fpr``.
    """

    learner: LearnerFamily = LearnerFamily.STUMP
    d_min: float = 0.995
    f_max: float = 0.5
    target_fpr: float = 1e-3
    max_stages: int = 10
    max_rounds_per_stage: int = 50
    validation_fraction: float = 0.3
    negative_ratio: int = 10
    max_candidate_features: Optional[int] = None
    mining_budget: int = 200_000
    mining_batch: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "learner", LearnerFamily(self.learner))
        self.clean()

    def clean(self) -> None:
        errors = {}
        if not 0 <= self.d_min <= 1:
            errors["d_min"] = f"d_min must lie in [0, 1], got {self.d_min}"
        if not 0 < self.f_max <= 1:
            errors["f_max"] = f"f_max must lie in (0, 1], got {self.f_max}"
        if not 0 <= self.target_fpr <= 1:
            errors["target_fpr"] = f"target_fpr must lie in [0, 1], got {self.target_fpr}"
        if not 0 <= self.validation_fraction < 1:
            errors["validation_fraction"] = "validation_fraction must lie in [0, 1)"
        for name in ("max_stages", "max_rounds_per_stage", "negative_ratio", "mining_budget", "mining_batch"):
            if getattr(self, name) < 1:
                errors[name] = f"{name} must be positive"
        if self.max_candidate_features is not None and self.max_candidate_features < 1:
            errors["max_candidate_features"] = "max_candidate_features must be positive"
        if errors:
            raise ValidationError(errors)

    @classmethod
    def from_settings(cls, **overrides: Any) -> CascadeTrainingConfig:
        conf = settings.HAARBOOST["CASCADE"]
        values: Dict[str, Any] = {
            "d_min": conf["D_MIN"],
            "f_max": conf["F_MAX"],
            "target_fpr": conf["TARGET_FPR"],
            "max_stages": conf["MAX_STAGES"],
            "max_rounds_per_stage": conf["MAX_ROUNDS_PER_STAGE"],
            "validation_fraction": conf["VALIDATION_FRACTION"],
            "negative_ratio": conf["NEGATIVE_RATIO"],
            "max_candidate_features": conf["MAX_CANDIDATE_FEATURES"],
            "mining_budget": conf["MINING_BUDGET"],
            "mining_batch": conf["MINING_BATCH"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "learner": str(self.learner),
            "d_min": self.d_min,
            "f_max": self.f_max,
            "target_fpr": self.target_fpr,
            "max_stages": self.max_stages,
            "max_rounds_per_stage": self.max_rounds_per_stage,
            "validation_fraction": self.validation_fraction,
            "negative_ratio": self.negative_ratio,
            "max_candidate_features": self.max_candidate_features,
            "mining_budget": self.mining_budget,
            "mining_batch": self.mining_batch,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class StageReport:
    """Validation rates of one accepted stage."""

    index: int
    rounds: int
    threshold: float
    detection_rate: float
    false_positive_rate: float
    train_negatives: int
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "rounds": self.rounds,
            "threshold": encode_real(self.threshold),
            "detection_rate": self.detection_rate,
            "false_positive_rate": self.false_positive_rate,
            "train_negatives": self.train_negatives,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> StageReport:
        return cls(
            int(payload["index"]),
            int(payload["rounds"]),
            decode_real(payload["threshold"]),
            float(payload["detection_rate"]),
            float(payload["false_positive_rate"]),
            int(payload["train_negatives"]),
            bool(payload.get("degenerate", False)),
        )
