"""
AdaBoost with RBF-SVM components and a decreasing sigma schedule.

The loop starts with a wide (weak) RBF kernel. A component whose weighted
error on the full training set exceeds 1/2 is thrown away and the width is
reduced; otherwise the round is recorded exactly as in plain AdaBoost.

Usage:
    from boostsvm import services as boostsvm_svc
    cfg = boostsvm_svc.default_config(data, seed=7)
    strong = boostsvm_svc.run_adaboost_svm(data, cfg)
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from django.conf import settings

from boosting.learners import StumpLearner, predictions_for, stump_errors
from boosting.models import ComponentClassifier, StrongClassifier, SvmComponent, WeightVector
from boosting.services import AdaBoostTrainer, error_of_predictions
from haarboost_project.exceptions import LearnerError, ScheduleExhaustedError, TrainingError
from svm import services as svm_svc
from svm.models import Dataset, KernelSpec, RbfSvmModel, SolverConfig

from .models import AttemptStatus, BoostSvmConfig, RoundAttempt

logger = logging.getLogger(__name__)

ComponentFactory = Callable[[Dataset, WeightVector, float, BoostSvmConfig, int], ComponentClassifier]

# renormalisation drift around an exact 1/2 error
HALF_TOLERANCE = 1e-12

ROUND_LOG_FIELDS = ["t", "sigma", "epsilon", "alpha", "status", "seed"]


def median_pairwise_distance(points: np.ndarray, subsample: int, rng: np.random.Generator) -> float:
    """Median Euclidean distance between distinct points of a random subsample."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) > subsample:
        points = points[np.sort(rng.choice(len(points), size=subsample, replace=False))]
    sq = (points * points).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0)
    upper = np.sqrt(d2[np.triu_indices(len(points), k=1)])
    median = float(np.median(upper)) if len(upper) else 0.0
    return median if median > 0 else 1.0


def default_config(
    data: Dataset, seed: int = 0, weights: Optional[WeightVector] = None, **overrides
) -> BoostSvmConfig:
    """
    Scale-free defaults: sigma_ini = 10 x median distance, sigma_min = 0.1 x
    median, twenty equal steps between them, resample size min(N, cap).

    A feature matrix wider than the SVM input is measured on the columns the
    first component trains on, the best stumps under ``weights`` (uniform
    when omitted).
    """
    conf = settings.HAARBOOST["BOOSTSVM"]
    rng = np.random.default_rng(seed)
    points = data.points
    d = int(overrides.get("feature_subset_size") or conf["FEATURE_SUBSET_SIZE"])
    if data.feature_ids is not None and data.dimension > d:
        w = weights if weights is not None else WeightVector.uniform(len(data))
        points = data.points[:, select_feature_subset(data, w, d)]
    median = median_pairwise_distance(points, int(conf["MEDIAN_SUBSAMPLE"]), rng)
    sigma_ini = float(conf["SIGMA_INI_FACTOR"]) * median
    sigma_min = float(conf["SIGMA_MIN_FACTOR"]) * median
    sigma_step = (sigma_ini - sigma_min) / int(conf["SIGMA_STEPS"])
    overrides.setdefault("resample_n", min(len(data), int(conf["RESAMPLE_CAP"])))
    logger.debug(f"median pairwise distance {median:.4g}: sigma {sigma_ini:.4g} -> {sigma_min:.4g}")
    return BoostSvmConfig.from_settings(sigma_ini, sigma_min, sigma_step, seed=seed, **overrides)


def select_feature_subset(data: Dataset, w: WeightVector, d: int, search=None) -> np.ndarray:
    """Column positions of the ``d`` features with the lowest best-stump error (ties: lower id)."""
    errors = stump_errors(data, w, search)
    return np.sort(np.argsort(errors, kind="stable")[:d])


def make_svm_component(
    data: Dataset,
    w: WeightVector,
    sigma: float,
    cfg: BoostSvmConfig,
    seed: int,
    search=None,
) -> SvmComponent:
    """
    Train one weighted RBF-SVM component.

    Tabular data (no feature ids) uses every column. Feature matrices with
    more than ``cfg.feature_subset_size`` columns are projected onto the
    best-stump columns under the current weights first.
    """
    if data.feature_ids is not None and data.dimension > cfg.feature_subset_size:
        columns = select_feature_subset(data, w, cfg.feature_subset_size, search)
        projected = Dataset(data.points[:, columns], data.labels)
        input_ids = np.asarray(data.feature_ids, dtype=np.int64)[columns]
    else:
        projected = Dataset(data.points, data.labels)
        input_ids = (
            np.arange(data.dimension, dtype=np.int64)
            if data.feature_ids is None
            else np.asarray(data.feature_ids, dtype=np.int64)
        )
    model = svm_svc.train_weighted_svm(
        projected,
        w,
        KernelSpec.rbf(sigma),
        C=cfg.C,
        cfg=SolverConfig.from_settings(),
        mode=cfg.mode,
        sample_size=min(cfg.resample_n, len(data)),
        seed=seed,
    )
    return SvmComponent(input_ids, model)


class AdaBoostSvmTrainer(AdaBoostTrainer):
    """
    AdaBoost whose step retrains at decreasing sigma until a component with
    weighted error <= 1/2 is found.

    ``attempts`` logs every training attempt, accepted or not. After
    ``stall_limit`` consecutive zero-weight rounds sigma is decreased too.
    """

    def __init__(
        self,
        data: Dataset,
        cfg: BoostSvmConfig,
        initial_weights: Optional[WeightVector] = None,
        factory: Optional[ComponentFactory] = None,
    ) -> None:
        super().__init__(data, learner=self._refuse_learner, initial_weights=initial_weights)
        self.cfg = cfg
        self.schedule = cfg.schedule()
        self.factory = factory or self._default_factory
        self.rng = np.random.default_rng(cfg.seed)
        self.attempts: List[RoundAttempt] = []
        self.stall = 0
        self._stumps = StumpLearner()

    @staticmethod
    def _refuse_learner(data: Dataset, w: WeightVector) -> ComponentClassifier:
        raise TrainingError("AdaBoostSvmTrainer trains through its component factory")

    def _default_factory(
        self, data: Dataset, w: WeightVector, sigma: float, cfg: BoostSvmConfig, seed: int
    ) -> ComponentClassifier:
        search = self._stumps.search_for(data) if data.feature_ids is not None else None
        return make_svm_component(data, w, sigma, cfg, seed, search)

    @property
    def sigma(self) -> float:
        return self.schedule.current

    def step(self):
        """
        Train until one round is accepted.

        Returns:
            The accepted BoostRound, or None once the schedule is exhausted

        Raises:
            ScheduleExhaustedError: if sigma ran out before any round was accepted
            LearnerError: if the component factory failed, with the round index
        """
        if self.finished:
            raise TrainingError("boosting already finished")
        while not self.schedule.exhausted:
            sigma = self.schedule.current
            seed = int(self.rng.integers(0, 2**31 - 1))
            try:
                h = self.factory(self.data, self.weights, sigma, self.cfg, seed)
            except (TrainingError, ValueError, FloatingPointError) as exc:
                raise LearnerError(f"sigma {sigma:.4g}: {exc}", self.t + 1) from exc
            predictions = predictions_for(h, self.data)
            epsilon = error_of_predictions(predictions, self.data.labels, self.weights)
            if abs(epsilon - 0.5) <= HALF_TOLERANCE:
                epsilon = 0.5
            if epsilon > 0.5:
                self.attempts.append(RoundAttempt(self.t + 1, sigma, epsilon, None, AttemptStatus.REJECTED, seed))
                logger.debug(f"sigma {sigma:.4g}: eps={epsilon:.4f} > 0.5, decreasing sigma")
                self.schedule.decrement()
                continue
            round_ = self.record(h, epsilon, predictions)
            self.attempts.append(RoundAttempt(round_.t, sigma, epsilon, round_.alpha, AttemptStatus.ACCEPTED, seed))
            logger.debug(f"round {round_.t}: sigma={sigma:.4g} eps={epsilon:.4f} alpha={round_.alpha:.4f}")
            if round_.alpha == 0.0:
                self.stall += 1
                if self.stall >= self.cfg.stall_limit:
                    logger.warning(f"{self.stall} zero-weight rounds at sigma {sigma:.4g}, decreasing sigma")
                    self.schedule.decrement()
                    self.stall = 0
            else:
                self.stall = 0
            return round_

        self.finished = True
        if not self.history:
            raise ScheduleExhaustedError(
                f"sigma reached sigma_min={self.schedule.sigma_min:.4g} before any round was accepted"
            )
        logger.info(f"sigma schedule exhausted after {self.t} rounds")
        return None


def fit_adaboost_svm(
    data: Dataset,
    cfg: BoostSvmConfig,
    initial_weights: Optional[WeightVector] = None,
    factory: Optional[ComponentFactory] = None,
) -> AdaBoostSvmTrainer:
    """
    Run the adaptive-sigma loop until sigma <= sigma_min, T_max rounds, or a
    perfect component.

    Raises:
        ScheduleExhaustedError: if no round was ever accepted
        SingleClassError: if the data holds one class
    """
    trainer = AdaBoostSvmTrainer(data, cfg, initial_weights, factory)
    while trainer.t < cfg.t_max and not trainer.finished:
        trainer.step()
    trainer.check_bound()
    logger.info(
        f"AdaBoostSVM finished: {trainer.t} rounds, {len(trainer.attempts)} attempts, "
        f"final sigma {trainer.sigma:.4g}, training error {trainer.training_error():.4f}"
    )
    return trainer


def run_adaboost_svm(
    data: Dataset,
    cfg: BoostSvmConfig,
    initial_weights: Optional[WeightVector] = None,
    factory: Optional[ComponentFactory] = None,
) -> StrongClassifier:
    """Ensemble from fit_adaboost_svm; the attempt log is on the trainer."""
    return fit_adaboost_svm(data, cfg, initial_weights, factory).classifier()


def write_round_log(attempts: Sequence[RoundAttempt], path: Union[str, Path]) -> Path:
    """Write one CSV row per training attempt."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=ROUND_LOG_FIELDS)
        writer.writeheader()
        for attempt in attempts:
            writer.writerow(attempt.as_row())
    return path


def single_svm_baseline(data: Dataset, sigma: float, C: Optional[float] = None, seed: Optional[int] = None) -> RbfSvmModel:
    """One RBF-SVM at a fixed width, the reference the ensemble is compared with."""
    return svm_svc.train_svm(data, KernelSpec.rbf(sigma), C=C, seed=seed)
