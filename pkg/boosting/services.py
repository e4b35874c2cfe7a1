"""
AdaBoost over any component learner.

Usage:
    from boosting import services as boost_svc
    strong = boost_svc.run_adaboost(data, StumpLearner(), T=20)
    score, label = boost_svc.strong_decision(strong, x)
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from haarboost_project.exceptions import BoostingBoundError, LearnerError, TrainingError
from svm.models import Dataset

from .learners import ComponentLearner, predictions_for
from .models import BoostRound, ComponentClassifier, StrongClassifier, WeightVector, hard_sign

logger = logging.getLogger(__name__)


def _check_sizes(data: Dataset, w: WeightVector) -> None:
    if len(data) != len(w):
        raise ValidationError({"weights": f"{len(w)} weights for {len(data)} samples"})


def error_of_predictions(predictions: np.ndarray, labels: np.ndarray, w: WeightVector) -> float:
    wrong = np.asarray(predictions) != np.asarray(labels)
    return float(min(1.0, max(0.0, np.asarray(w)[wrong].sum())))


def weighted_error(h: ComponentClassifier, data: Dataset, w: WeightVector) -> float:
    """Sum of the weights of the samples ``h`` misclassifies."""
    _check_sizes(data, w)
    return error_of_predictions(predictions_for(h, data), data.labels, w)


def clamp_epsilon(epsilon: float) -> Tuple[float, bool]:
    floor = float(settings.HAARBOOST["BOOSTING"]["EPSILON_FLOOR"])
    clamped = min(max(epsilon, floor), 1.0 - floor)
    return clamped, clamped != epsilon


def alpha_of(epsilon: float) -> float:
    """
    Component weight 1/2 ln((1 - eps) / eps).

    eps is clamped into [floor, 1 - floor] first; a clamp is logged.
    """
    eps, clamped = clamp_epsilon(epsilon)
    if clamped:
        logger.warning(f"epsilon {epsilon!r} clamped to {eps!r}")
    return 0.5 * math.log((1.0 - eps) / eps)


def reweight(w: WeightVector, alpha: float, predictions: np.ndarray, labels: np.ndarray) -> Tuple[WeightVector, float]:
    raw = np.asarray(w) * np.exp(-alpha * labels.astype(np.float64) * predictions)
    return WeightVector.normalized(raw)


def update_weights(
    w: WeightVector, alpha: float, h: ComponentClassifier, data: Dataset
) -> Tuple[WeightVector, float]:
    """
    w_i <- w_i exp(-alpha y_i h(x_i)) / Z.

    Returns:
        The new distribution and the normalizer Z
    """
    _check_sizes(data, w)
    return reweight(w, alpha, predictions_for(h, data), data.labels)


def strong_decision(s: StrongClassifier, x) -> Tuple[float, int]:
    """(score, label) for one input vector; label = sign(score - threshold), sign(0) = +1."""
    row = np.asarray(x, dtype=np.float64).reshape(1, -1)
    score = float(s.scores(row)[0])
    return score, int(hard_sign(np.array([score - s.threshold]))[0])


def exponential_loss(s: StrongClassifier, data: Dataset) -> float:
    """mean_i exp(-y_i f(x_i)) with f the unthresholded score."""
    margins = data.labels * s.scores(data.points, data.feature_ids)
    return float(np.exp(-margins).mean())


def error_bound(history: List[BoostRound]) -> float:
    """prod_t 2 sqrt(eps_t (1 - eps_t)), each eps clamped as for its alpha."""
    factors = []
    for r in history:
        eps, _ = clamp_epsilon(r.epsilon)
        factors.append(2.0 * math.sqrt(eps * (1.0 - eps)))
    return float(np.prod(factors))


class AdaBoostTrainer:
    """
    Incremental AdaBoost: each ``step()`` trains, scores and records one round.

    Running scores over the training set are kept so the strong classifier's
    training error and the boosting bound are available at any time.
    """

    def __init__(
        self,
        data: Dataset,
        learner: ComponentLearner,
        initial_weights: Optional[WeightVector] = None,
    ) -> None:
        data.require_both_classes()
        self.data = data
        self.learner = learner
        self.initial_weights = initial_weights or WeightVector.uniform(len(data))
        _check_sizes(data, self.initial_weights)
        self.weights = self.initial_weights
        self.rounds: List[Tuple[float, ComponentClassifier]] = []
        self.history: List[BoostRound] = []
        self.scores = np.zeros(len(data))
        self.finished = False

    @property
    def t(self) -> int:
        return len(self.history)

    def record(self, h: ComponentClassifier, epsilon: float, predictions: np.ndarray) -> BoostRound:
        """Accept ``h`` with training error ``epsilon`` as the next round."""
        eps, clamped = clamp_epsilon(epsilon)
        alpha = alpha_of(epsilon)
        self.weights, normalizer = reweight(self.weights, alpha, predictions, self.data.labels)
        self.scores += alpha * predictions
        round_ = BoostRound(self.t + 1, float(epsilon), alpha, normalizer, h.describe(), clamped)
        self.rounds.append((alpha, h))
        self.history.append(round_)
        if epsilon == 0.0:
            logger.info(f"round {round_.t}: perfect component, stopping early")
            self.finished = True
        return round_

    def step(self) -> BoostRound:
        if self.finished:
            raise TrainingError("boosting already stopped on a perfect component")
        try:
            h = self.learner(self.data, self.weights)
        except (TrainingError, ValueError, FloatingPointError) as exc:
            raise LearnerError(str(exc), self.t + 1) from exc
        predictions = predictions_for(h, self.data)
        epsilon = error_of_predictions(predictions, self.data.labels, self.weights)
        round_ = self.record(h, epsilon, predictions)
        logger.debug(f"round {round_.t}: eps={epsilon:.4f} alpha={round_.alpha:.4f} {round_.learner_id}")
        return round_

    def training_error(self) -> float:
        """Error of the current ensemble at threshold 0 under the initial weights."""
        wrong = hard_sign(self.scores) != self.data.labels
        return float(np.asarray(self.initial_weights)[wrong].sum())

    def normalizer_product(self) -> float:
        return float(np.prod([r.normalizer for r in self.history]))

    def check_bound(self) -> None:
        """
        Raise BoostingBoundError unless the training error is within
        prod_t 2 sqrt(eps_t (1 - eps_t)).
        """
        error = self.training_error()
        bound = error_bound(self.history)
        if error > bound * (1 + 1e-9) + 1e-12:
            raise BoostingBoundError(f"training error {error} exceeds bound {bound} after {self.t} rounds")

    def classifier(self, threshold: float = 0.0) -> StrongClassifier:
        return StrongClassifier(tuple(self.rounds), threshold, tuple(self.history))


def run_adaboost(
    data: Dataset,
    learner: ComponentLearner,
    T: int,
    initial_weights: Optional[WeightVector] = None,
) -> StrongClassifier:
    """
    Run T rounds (fewer if a component is perfect) and return the ensemble.

    Raises:
        LearnerError: if the learner fails; carries the round index
        BoostingBoundError: if the training error breaks the boosting bound
    """
    if T < 1:
        raise ValidationError({"T": f"T must be >= 1, got {T}"})
    trainer = AdaBoostTrainer(data, learner, initial_weights)
    while trainer.t < T and not trainer.finished:
        trainer.step()
    trainer.check_bound()
    logger.info(
        f"AdaBoost finished: {trainer.t} rounds, training error {trainer.training_error():.4f}, "
        f"bound {error_bound(trainer.history):.4g}"
    )
    return trainer.classifier()
