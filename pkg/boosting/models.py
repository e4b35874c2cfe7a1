"""
Boosting domain types: sample weights, round records, component classifiers
and the boosted strong classifier.

Component classifiers read their inputs by feature ID. A feature matrix is
always passed with the IDs of its columns (ascending); ``None`` means the
column index is the ID, which is how tabular data is handled.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from svm.models import RbfSvmModel
from svm.services import decision_batch

WEIGHT_SUM_TOLERANCE = 1e-12


class LearnerFamily(models.TextChoices):
    SVM = "svm", "RBF-SVM (adaptive sigma)"
    STUMP = "stump", "Decision stump"
    TREE = "tree", "Decision tree"
    NET = "net", "Neural network"


def select_columns(X: np.ndarray, feature_ids: Optional[np.ndarray], wanted: Sequence[int]) -> np.ndarray:
    """Columns of ``X`` for the feature IDs in ``wanted``."""
    wanted_arr = np.asarray(wanted, dtype=np.int64)
    if feature_ids is None:
        return X[:, wanted_arr]
    pos = np.searchsorted(feature_ids, wanted_arr)
    pos = np.minimum(pos, len(feature_ids) - 1)
    if not np.array_equal(feature_ids[pos], wanted_arr):
        raise KeyError(f"features {sorted(set(wanted_arr.tolist()) - set(feature_ids.tolist()))[:5]} not in input")
    return X[:, pos]


def hard_sign(values: np.ndarray) -> np.ndarray:
    """sign() with 0 mapped to +1."""
    return np.where(values >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Distribution over training samples: non-negative, summing to 1."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self.values.setflags(write=False)
        self.clean()

    def clean(self) -> None:
        if self.values.ndim != 1 or not len(self.values):
            raise ValidationError({"values": "weights must be a non-empty vector"})
        if (self.values < 0).any() or not np.isfinite(self.values).all():
            raise ValidationError({"values": "weights must be finite and non-negative"})
        if abs(self.values.sum() - 1.0) > WEIGHT_SUM_TOLERANCE * max(1, len(self.values)):
            raise ValidationError({"values": f"weights sum to {self.values.sum()!r}, not 1"})

    @classmethod
    def uniform(cls, n: int) -> WeightVector:
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, raw: np.ndarray) -> Tuple[WeightVector, float]:
        """Normalise non-negative ``raw`` weights; returns the vector and the divisor."""
        raw = np.asarray(raw, dtype=np.float64)
        total = float(raw.sum())
        if not total > 0 or not np.isfinite(total):
            raise ValidationError({"values": f"cannot normalise weights with total {total}"})
        return cls(raw / total), total

    @classmethod
    def class_balanced(cls, labels: np.ndarray) -> WeightVector:
        """Half the mass on each class, uniform within a class."""
        labels = np.asarray(labels)
        pos = labels > 0
        raw = np.where(pos, 0.5 / max(1, pos.sum()), 0.5 / max(1, (~pos).sum()))
        return cls.normalized(raw)[0]

    def __len__(self) -> int:
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class BoostRound:
    """Audit record of one accepted round. ``normalizer`` is the weight-update divisor."""

    t: int
    epsilon: float
    alpha: float
    normalizer: float
    learner_id: str
    clamped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "normalizer": self.normalizer,
            "learner_id": self.learner_id,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> BoostRound:
        return cls(**payload)


# ----- Component classifiers -----

class ComponentClassifier:
    """Base for component classifiers; ``predict`` returns int8 labels in {-1, +1}."""

    family: str = ""

    @property
    def feature_ids(self) -> Tuple[int, ...]:
        raise NotImplementedError

    def predict(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return self.family

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Stump(ComponentClassifier):
    """Predicts ``polarity`` where the feature value exceeds ``threshold``."""

    feature_id: int
    threshold: float
    polarity: int

    family = "stump"

    def __post_init__(self) -> None:
        if self.polarity not in (-1, 1):
            raise ValidationError({"polarity": "polarity must be -1 or +1"})

    @property
    def feature_ids(self) -> Tuple[int, ...]:
        return (self.feature_id,)

    def predict(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        column = select_columns(X, feature_ids, [self.feature_id])[:, 0]
        return np.where(column > self.threshold, self.polarity, -self.polarity).astype(np.int8)

    def describe(self) -> str:
        return f"stump(f={self.feature_id}, thr={self.threshold:.4g}, pol={self.polarity:+d})"

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "feature_id": self.feature_id,
                "threshold": self.threshold, "polarity": self.polarity}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> Stump:
        return cls(int(payload["feature_id"]), float(payload["threshold"]), int(payload["polarity"]))


@dataclass(frozen=True, eq=False)
class Tree(ComponentClassifier):
    """
    Binary tree of stump splits stored as parallel node arrays.

    Node k is a leaf when ``features[k] == -1`` and predicts ``values[k]``;
    otherwise samples with value > ``thresholds[k]`` go to ``right[k]``.
    """

    features: np.ndarray
    thresholds: np.ndarray
    left: np.ndarray
    right: np.ndarray
    values: np.ndarray

    family = "tree"

    @property
    def feature_ids(self) -> Tuple[int, ...]:
        return tuple(sorted({int(f) for f in self.features if f >= 0}))

    @property
    def depth(self) -> int:
        def walk(k: int) -> int:
            if self.features[k] < 0:
                return 0
            return 1 + max(walk(int(self.left[k])), walk(int(self.right[k])))
        return walk(0)

    def predict(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        used = self.feature_ids
        columns = select_columns(X, feature_ids, used) if used else np.zeros((len(X), 0))
        col_of = {f: i for i, f in enumerate(used)}
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feats = self.features[node]
            active = feats >= 0
            if not active.any():
                break
            idx = rows[active]
            cols = np.array([col_of[int(f)] for f in feats[active]], dtype=np.int64)
            go_right = columns[idx, cols] > self.thresholds[node[active]]
            node[active] = np.where(go_right, self.right[node[active]], self.left[node[active]])
        return self.values[node].astype(np.int8)

    def describe(self) -> str:
        return f"tree(depth={self.depth}, nodes={len(self.features)})"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "features": self.features.tolist(),
            "thresholds": self.thresholds.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> Tree:
        return cls(
            np.asarray(payload["features"], dtype=np.int64),
            np.asarray(payload["thresholds"], dtype=np.float64),
            np.asarray(payload["left"], dtype=np.int64),
            np.asarray(payload["right"], dtype=np.int64),
            np.asarray(payload["values"], dtype=np.int8),
        )


@dataclass(frozen=True, eq=False)
class TinyNet(ComponentClassifier):
    """One tanh hidden layer over standardised inputs; predicts sign of the linear output."""

    input_ids: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    seed: Optional[int] = field(default=None)

    family = "net"

    @property
    def feature_ids(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in self.input_ids)

    def raw_output(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        z = (select_columns(X, feature_ids, self.input_ids) - self.means) / self.scales
        return np.tanh(z @ self.w1 + self.b1) @ self.w2 + self.b2

    def predict(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        return hard_sign(self.raw_output(X, feature_ids))

    def describe(self) -> str:
        return f"net(inputs={len(self.input_ids)}, hidden={len(self.b1)})"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "input_ids": self.input_ids.tolist(),
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> TinyNet:
        hidden = len(payload["b1"])
        return cls(
            np.asarray(payload["input_ids"], dtype=np.int64),
            np.asarray(payload["means"], dtype=np.float64),
            np.asarray(payload["scales"], dtype=np.float64),
            np.asarray(payload["w1"], dtype=np.float64).reshape(-1, hidden),
            np.asarray(payload["b1"], dtype=np.float64),
            np.asarray(payload["w2"], dtype=np.float64),
            float(payload["b2"]),
            payload.get("seed"),
        )


@dataclass(frozen=True, eq=False)
class SvmComponent(ComponentClassifier):
    """RBF-SVM over a fixed feature subset (all columns for tabular data)."""

    input_ids: np.ndarray
    model: RbfSvmModel

    family = "svm"

    @property
    def feature_ids(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in self.input_ids)

    @property
    def sigma(self) -> float:
        return self.model.kernel.sigma

    def decision(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        return decision_batch(self.model, select_columns(X, feature_ids, self.input_ids))

    def predict(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        return hard_sign(self.decision(X, feature_ids))

    def describe(self) -> str:
        return f"svm(sigma={self.sigma:.4g}, inputs={len(self.input_ids)}, sv={len(self.model.dual_coefs)})"

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "input_ids": self.input_ids.tolist(), "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> SvmComponent:
        return cls(np.asarray(payload["input_ids"], dtype=np.int64), RbfSvmModel.from_dict(payload["model"]))


_COMPONENTS: Dict[str, Type[Any]] = {
    "stump": Stump,
    "tree": Tree,
    "net": TinyNet,
    "svm": SvmComponent,
}


def component_from_dict(payload: Dict[str, Any]) -> ComponentClassifier:
    try:
        component_cls = _COMPONENTS[payload["family"]]
    except KeyError:
        raise ValidationError({"family": f"unknown component family {payload.get('family')!r}"})
    return component_cls.from_dict(payload)


# ----- Strong classifier -----

@dataclass(frozen=True, eq=False)
class StrongClassifier:
    """
    Weighted vote of component classifiers.

    ``threshold`` shifts the decision: label = sign(score - threshold), with
    sign(0) = +1. ``history`` keeps the round records for audit.
    """

    rounds: Tuple[Tuple[float, ComponentClassifier], ...]
    threshold: float = 0.0
    history: Tuple[BoostRound, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rounds", tuple(self.rounds))
        object.__setattr__(self, "history", tuple(self.history))
        self.clean()

    def clean(self) -> None:
        if not self.rounds:
            raise ValidationError({"rounds": "a strong classifier needs at least one round"})
        if not all(np.isfinite(alpha) for alpha, _ in self.rounds):
            raise ValidationError({"rounds": "round weights must be finite"})

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def feature_ids(self) -> List[int]:
        return sorted({f for _, h in self.rounds for f in h.feature_ids})

    def scores(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        total = np.zeros(len(X))
        for alpha, h in self.rounds:
            total += alpha * h.predict(X, feature_ids)
        return total

    def predict(self, X: np.ndarray, feature_ids: Optional[np.ndarray] = None) -> np.ndarray:
        return hard_sign(self.scores(X, feature_ids) - self.threshold)

    def with_threshold(self, threshold: float) -> StrongClassifier:
        return replace(self, threshold=float(threshold))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "rounds": [{"alpha": alpha, "component": h.to_dict()} for alpha, h in self.rounds],
            "history": [r.to_dict() for r in self.history],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> StrongClassifier:
        return cls(
            tuple((float(r["alpha"]), component_from_dict(r["component"])) for r in payload["rounds"]),
            float(payload["threshold"]),
            tuple(BoostRound.from_dict(r) for r in payload.get("history", [])),
        )
