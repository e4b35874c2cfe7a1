"""
Configuration and audit types for AdaBoost with RBF-SVM components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from django.conf import settings
from django.core.exceptions import ValidationError
from django.db import models

from svm.models import SampleMode


class AttemptStatus(models.TextChoices):
    ACCEPTED = "accepted", "Round recorded"
    REJECTED = "rejected", "Error above 1/2, sigma decreased"


@dataclass
class SigmaSchedule:
    """
    Decreasing RBF width. The run continues while ``current > sigma_min``.
    """

    sigma_ini: float
    sigma_min: float
    sigma_step: float
    current: float = field(default=0.0)

    def __post_init__(self) -> None:
        if not (0 < self.sigma_min < self.sigma_ini and self.sigma_step > 0):
            raise ValidationError(
                {"sigma": f"need 0 < sigma_min < sigma_ini and sigma_step > 0, got "
                          f"{self.sigma_min}, {self.sigma_ini}, {self.sigma_step}"}
            )
        if not self.current:
            self.current = self.sigma_ini

    @property
    def exhausted(self) -> bool:
        return self.current <= self.sigma_min

    def decrement(self) -> float:
        self.current = max(self.sigma_min, self.current - self.sigma_step)
        return self.current


@dataclass(frozen=True)
class BoostSvmConfig:
    sigma_ini: float
    sigma_min: float
    sigma_step: float
    C: float = 1.0
    resample_n: int = 1000
    t_max: int = 50
    feature_subset_size: int = 16
    seed: int = 0
    stall_limit: int = 3
    mode: SampleMode = SampleMode.RESAMPLE

    def __post_init__(self) -> None:
        self.clean()

    def clean(self) -> None:
        errors = {}
        for name in ("C", "resample_n", "t_max", "feature_subset_size", "stall_limit"):
            if not getattr(self, name) > 0:
                errors[name] = f"{name} must be positive"
        if errors:
            raise ValidationError(errors)
        SigmaSchedule(self.sigma_ini, self.sigma_min, self.sigma_step)

    def schedule(self) -> SigmaSchedule:
        return SigmaSchedule(self.sigma_ini, self.sigma_min, self.sigma_step)

    @classmethod
    def from_settings(cls, sigma_ini: float, sigma_min: float, sigma_step: float, **overrides: Any) -> BoostSvmConfig:
        conf = settings.HAARBOOST["BOOSTSVM"]
        values: Dict[str, Any] = {
            "C": settings.HAARBOOST["SVM"]["C"],
            "resample_n": conf["RESAMPLE_CAP"],
            "t_max": conf["T_MAX"],
            "feature_subset_size": conf["FEATURE_SUBSET_SIZE"],
            "stall_limit": conf["STALL_LIMIT"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(sigma_ini, sigma_min, sigma_step, **values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sigma_ini": self.sigma_ini,
            "sigma_min": self.sigma_min,
            "sigma_step": self.sigma_step,
            "C": self.C,
            "resample_n": self.resample_n,
            "t_max": self.t_max,
            "feature_subset_size": self.feature_subset_size,
            "seed": self.seed,
            "stall_limit": self.stall_limit,
            "mode": str(self.mode),
        }


@dataclass(frozen=True)
class RoundAttempt:
    """One SVM training attempt; rejected attempts do not consume a round."""

    t: int
    sigma: float
    epsilon: float
    alpha: Optional[float]
    status: AttemptStatus
    seed: int

    def as_row(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "sigma": repr(self.sigma),
            "epsilon": repr(self.epsilon),
            "alpha": "" if self.alpha is None else repr(self.alpha),
            "status": self.status.value,
            "seed": self.seed,
        }
