"""
Domain types for the soft-margin kernel SVM.

Models are immutable once trained and carry everything needed to evaluate
the decision function: kernel, support vectors, y*alpha coefficients and bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.db import models

from haarboost_project.exceptions import SingleClassError


class KernelKind(models.TextChoices):
    RBF = "rbf", "Gaussian radial basis"
    POLYNOMIAL = "polynomial", "Polynomial"
    SIGMOID = "sigmoid", "Sigmoid"


class SampleMode(models.TextChoices):
    """How boosting weights reach the SVM."""

    RESAMPLE = "resample", "Draw a weighted bootstrap sample"
    REWEIGHT = "reweight", "Per-sample box constraints"


@dataclass(frozen=True)
class KernelSpec:
    """
    Kernel choice with its single parameter.

    ``sigma`` is used by RBF, ``degree`` by polynomial and ``offset`` by
    sigmoid; the other fields are ignored.
    """

    kind: KernelKind = KernelKind.RBF
    sigma: float = 1.0
    degree: int = 2
    offset: float = 0.0

    def __post_init__(self) -> None:
        self.clean()

    def clean(self) -> None:
        if self.kind == KernelKind.RBF and not self.sigma > 0:
            raise ValidationError({"sigma": f"RBF sigma must be positive, got {self.sigma}"})
        if self.kind == KernelKind.POLYNOMIAL and self.degree < 1:
            raise ValidationError({"degree": f"Polynomial degree must be >= 1, got {self.degree}"})

    @classmethod
    def rbf(cls, sigma: float) -> KernelSpec:
        return cls(KernelKind.RBF, sigma=float(sigma))

    @classmethod
    def polynomial(cls, degree: int) -> KernelSpec:
        return cls(KernelKind.POLYNOMIAL, degree=int(degree))

    @classmethod
    def sigmoid(cls, offset: float) -> KernelSpec:
        return cls(KernelKind.SIGMOID, offset=float(offset))

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == KernelKind.RBF:
            return {"kind": self.kind.value, "sigma": self.sigma}
        if self.kind == KernelKind.POLYNOMIAL:
            return {"kind": self.kind.value, "degree": self.degree}
        return {"kind": self.kind.value, "offset": self.offset}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> KernelSpec:
        kind = KernelKind(payload["kind"])
        if kind == KernelKind.RBF:
            return cls.rbf(payload["sigma"])
        if kind == KernelKind.POLYNOMIAL:
            return cls.polynomial(payload["degree"])
        return cls.sigmoid(payload["offset"])


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labelled vectors: ``points`` is (l, R) float64, ``labels`` (l,) in {-1, +1}.

    ``feature_ids`` optionally names the Haar feature behind each column.
    """

    points: np.ndarray
    labels: np.ndarray
    feature_ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=np.float64)))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int8).ravel())
        self.clean()

    def clean(self) -> None:
        if self.points.ndim != 2 or len(self.points) != len(self.labels):
            raise ValidationError({"points": "points must be an (l, R) array with one label per row"})
        if len(self.labels) and not np.isin(self.labels, (-1, 1)).all():
            raise ValidationError({"labels": "labels must be -1 or +1"})
        if self.feature_ids is not None and len(self.feature_ids) != self.points.shape[1]:
            raise ValidationError({"feature_ids": "one feature id per column required"})

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def require_both_classes(self) -> None:
        if len(self) < 2 or not ((self.labels == 1).any() and (self.labels == -1).any()):
            raise SingleClassError(f"training data needs both classes, got {len(self)} samples of one label")

    def take(self, indices: Sequence[int]) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.points[idx], self.labels[idx], self.feature_ids)


@dataclass(frozen=True)
class SolverConfig:
    kkt_tolerance: float = 1e-3
    max_passes: int = 200
    cache_budget: int = 1024

    def __post_init__(self) -> None:
        if not self.kkt_tolerance > 0:
            raise ValidationError({"kkt_tolerance": "must be positive"})
        if self.max_passes < 1 or self.cache_budget < 2:
            raise ValidationError({"max_passes": "max_passes >= 1 and cache_budget >= 2 required"})

    @classmethod
    def from_settings(cls, **overrides: Any) -> SolverConfig:
        conf = settings.HAARBOOST["SVM"]
        values = {
            "kkt_tolerance": conf["KKT_TOLERANCE"],
            "max_passes": conf["MAX_PASSES"],
            "cache_budget": conf["CACHE_BUDGET"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class RbfSvmModel:
    """
    Trained SVM. ``dual_coefs[j]`` is y_j * alpha_j for support vector j.

    ``converged`` is False when the solver hit its iteration cap; the model
    is then the last iterate.
    """

    kernel: KernelSpec
    C: float
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    converged: bool = True
    iterations: int = 0
    seed: Optional[int] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ValidationError({"C": f"C must be positive, got {self.C}"})
        if len(self.support_vectors) != len(self.dual_coefs):
            raise ValidationError({"dual_coefs": "one coefficient per support vector required"})

    @property
    def dimension(self) -> int:
        return self.support_vectors.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel.to_dict(),
            "C": float(self.C),
            "bias": float(self.bias),
            "dimension": int(self.dimension),
            "support_vectors": self.support_vectors.ravel().tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> RbfSvmModel:
        dim = int(payload["dimension"])
        return cls(
            KernelSpec.from_dict(payload["kernel"]),
            float(payload["C"]),
            np.asarray(payload["support_vectors"], dtype=np.float64).reshape(-1, dim),
            np.asarray(payload["dual_coefs"], dtype=np.float64),
            float(payload["bias"]),
            bool(payload.get("converged", True)),
            int(payload.get("iterations", 0)),
            payload.get("seed"),
        )
