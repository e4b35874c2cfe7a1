"""
Cascade training, model files and detection output.

Training grows one stage at a time with an incremental boosting trainer.
After every round the stage threshold is set from the held-out faces (the
largest threshold keeping d_min of them), and the stage is closed once it
passes at most f_max of the held-out negatives. Negatives for the next stage
are windows of the nonface images that the cascade so far still accepts.

Usage:
    from cascade import services as cascade_svc
    model = cascade_svc.train_cascade(faces, backgrounds, CascadeTrainingConfig.from_settings(seed=7))
    cascade_svc.save_model(model, "model.json")
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError

from boosting.learners import StumpLearner, TinyNetLearner, TreeLearner
from boosting.models import LearnerFamily, StrongClassifier, WeightVector
from boosting.services import AdaBoostTrainer
from boostsvm import services as boostsvm_svc
from boostsvm.models import AttemptStatus
from boostsvm.services import AdaBoostSvmTrainer
from features import services as feature_svc
from features.models import FeaturePool, ScaledFeatureLUT
from haarboost_project.exceptions import DataError, ModelFormatError, StageGoalError
from imaging import services as imaging_svc
from imaging.models import GrayImage
from svm.models import Dataset

from .detection import scale_ladder
from .models import (
    CascadeModel,
    CascadeTrainingConfig,
    Detection,
    ScanConfig,
    StageReport,
    decode_real,
    encode_real,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

ROUND_LOG_FIELDS = ["stage", "t", "sigma", "epsilon", "alpha", "status", "component"]
DETECTION_FIELDS = ["path", "x", "y", "w", "h", "score"]


def stage_threshold(face_scores: np.ndarray, d_min: float) -> float:
    """
    Largest threshold in {+inf} and the face scores whose detection rate
    (share of scores >= threshold) is at least ``d_min``.

    Raises:
        StageGoalError: if there are no usable face scores
    """
    scores = np.sort(np.asarray(face_scores, dtype=np.float64))[::-1]
    if not len(scores) or not np.isfinite(scores).all():
        raise StageGoalError(f"no threshold reaches d_min={d_min}: {len(scores)} face scores, some not finite")
    needed = math.ceil(d_min * len(scores) - 1e-9)
    if needed <= 0:
        return math.inf
    return float(scores[needed - 1])


def _acceptance(stages: Sequence[StrongClassifier], X: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Rows of candidate-feature matrix ``X`` that every stage accepts."""
    alive = np.arange(len(X))
    for stage in stages:
        if not len(alive):
            break
        alive = alive[stage.scores(X[alive], ids) >= stage.threshold]
    keep = np.zeros(len(X), dtype=bool)
    keep[alive] = True
    return keep


class CascadeTrainer:
    """
    Trains a cascade from base-size face windows and face-free images.

    ``round_log`` collects one row per boosting round (and per rejected
    sigma attempt with the SVM learner) for the CSV written beside the model.
    """

    def __init__(
        self,
        faces: np.ndarray,
        nonface_sources: Sequence[GrayImage],
        cfg: CascadeTrainingConfig,
        pool: Optional[FeaturePool] = None,
        scan: Optional[ScanConfig] = None,
    ) -> None:
        faces = np.asarray(faces)
        if faces.ndim != 3 or faces.shape[1] != faces.shape[2] or not len(faces):
            raise ValidationError({"faces": f"expected a (n, base, base) stack of windows, got shape {faces.shape}"})
        if faces.dtype != np.uint8:
            faces = np.clip(np.rint(faces), 0, 255).astype(np.uint8)
        self.base = int(faces.shape[1])
        self.cfg = cfg
        self.scan = scan or ScanConfig.from_settings()
        self.rng = np.random.default_rng(cfg.seed)

        self.sources = [img for img in nonface_sources if min(img.width, img.height) >= self.base]
        if not self.sources:
            raise DataError(f"no nonface image is at least {self.base}x{self.base}")
        self._integrals = [imaging_svc.build_integral(img) for img in self.sources]
        self._ladders = [scale_ladder(self.base, img.width, img.height, self.scan) for img in self.sources]

        self.full_pool = pool or feature_svc.enumerate_pool(self.base)
        if self.full_pool.base != self.base:
            raise ValidationError({"pool": f"pool base {self.full_pool.base} does not match {self.base}px faces"})
        self.candidates = self._candidate_pool()
        self.ids = self.candidates.ids
        self._luts: Dict[int, ScaledFeatureLUT] = {}

        order = self.rng.permutation(len(faces))
        n_val = int(round(cfg.validation_fraction * len(faces)))
        if 0 < n_val < len(faces):
            val_faces, train_faces = faces[np.sort(order[:n_val])], faces[np.sort(order[n_val:])]
            self.shared_validation = False
        else:
            logger.info(f"{len(faces)} faces: validating on the training faces")
            val_faces = train_faces = faces
            self.shared_validation = True
        lut = self._lut(self.base)
        self.face_train = feature_svc.feature_matrix(lut, train_faces)
        self.face_val = self.face_train if self.shared_validation else feature_svc.feature_matrix(lut, val_faces)

        self.stages: List[StrongClassifier] = []
        self.reports: List[StageReport] = []
        self.round_log: List[Dict[str, Any]] = []
        self.cumulative_fpr = 1.0
        self.stop_reason = ""

    def _candidate_pool(self) -> FeaturePool:
        cap = self.cfg.max_candidate_features
        if cap is None or len(self.full_pool) <= cap:
            return self.full_pool
        picked = np.sort(self.rng.choice(len(self.full_pool), size=cap, replace=False))
        logger.info(f"offering {cap} of {len(self.full_pool)} features to the learners")
        return self.full_pool.subset(self.full_pool.ids[picked])

    def _lut(self, size: int) -> ScaledFeatureLUT:
        if size not in self._luts:
            self._luts[size] = feature_svc.build_lut_for_size(self.candidates, size)
        return self._luts[size]

    # ----- Negatives -----

    def mine_negatives(self, count: int) -> Tuple[np.ndarray, bool]:
        """
        Draw random windows (random source, ladder size and position) until
        ``count`` of them pass every current stage or the budget runs out.

        Returns:
            (feature rows, exhausted flag)
        """
        found: List[np.ndarray] = []
        n_found = examined = 0
        batch = self.cfg.mining_batch
        used = np.asarray(sorted({f for stage in self.stages for f in stage.feature_ids}), dtype=np.int64)
        while n_found < count and examined < self.cfg.mining_budget:
            k = int(self.rng.integers(len(self.sources)))
            img, ip, ladder = self.sources[k], self._integrals[k], self._ladders[k]
            size = ladder[int(self.rng.integers(len(ladder)))]
            xs = self.rng.integers(0, img.width - size + 1, size=batch)
            ys = self.rng.integers(0, img.height - size + 1, size=batch)
            lut = self._lut(size)
            if len(used):
                keep = _acceptance(self.stages, feature_svc.evaluate_windows(lut, ip, xs, ys, feature_ids=used), used)
                xs, ys = xs[keep], ys[keep]
            if len(xs):
                found.append(feature_svc.evaluate_windows(lut, ip, xs, ys))
                n_found += len(xs)
            examined += batch
        rows = np.vstack(found)[:count] if found else np.zeros((0, len(self.ids)))
        exhausted = len(rows) < count
        if exhausted:
            logger.warning(
                f"negative bootstrap exhausted: {len(rows)} of {count} windows after examining {examined}"
            )
        else:
            logger.info(f"mined {len(rows)} negatives from {examined} windows")
        return rows, exhausted

    def _refill(self, current: np.ndarray, count: int) -> Tuple[np.ndarray, bool]:
        kept = current[_acceptance(self.stages[-1:], current, self.ids)] if len(current) and self.stages else current
        if len(kept) >= count:
            return kept[:count], False
        extra, exhausted = self.mine_negatives(count - len(kept))
        return np.vstack([kept, extra]) if len(kept) else extra, exhausted

    # ----- Stages -----

    def _booster(self, data: Dataset, w0: WeightVector, stage_seed: int) -> AdaBoostTrainer:
        family = self.cfg.learner
        if family == LearnerFamily.SVM:
            svm_cfg = boostsvm_svc.default_config(
                data, seed=stage_seed, weights=w0, t_max=self.cfg.max_rounds_per_stage
            )
            return AdaBoostSvmTrainer(data, svm_cfg, w0)
        if family == LearnerFamily.TREE:
            learner = TreeLearner()
        elif family == LearnerFamily.NET:
            learner = TinyNetLearner(np.random.default_rng(stage_seed))
        else:
            learner = StumpLearner()
        return AdaBoostTrainer(data, learner, w0)

    def _log_rounds(self, index: int, booster: AdaBoostTrainer) -> None:
        if isinstance(booster, AdaBoostSvmTrainer):
            for attempt in booster.attempts:
                accepted = attempt.status == AttemptStatus.ACCEPTED
                self.round_log.append({
                    "stage": index,
                    "t": attempt.t,
                    "sigma": repr(attempt.sigma),
                    "epsilon": repr(attempt.epsilon),
                    "alpha": repr(attempt.alpha) if attempt.alpha is not None else "",
                    "status": str(attempt.status),
                    "component": booster.history[attempt.t - 1].learner_id if accepted else "",
                })
            return
        for r in booster.history:
            self.round_log.append({
                "stage": index,
                "t": r.t,
                "sigma": "",
                "epsilon": repr(r.epsilon),
                "alpha": repr(r.alpha),
                "status": str(AttemptStatus.ACCEPTED),
                "component": r.learner_id,
            })

    def train_stage(self, index: int, neg_train: np.ndarray, neg_val: np.ndarray) -> Tuple[StrongClassifier, StageReport]:
        """Boost until the stage meets f_max on the held-out negatives or hits the round limit."""
        X = np.vstack([self.face_train, neg_train])
        labels = np.concatenate([np.ones(len(self.face_train)), -np.ones(len(neg_train))])
        data = Dataset(X, labels, self.ids)
        booster = self._booster(data, WeightVector.class_balanced(data.labels), int(self.rng.integers(0, 2**31 - 1)))

        stage: Optional[StrongClassifier] = None
        theta, detection_rate, fpr = math.inf, 0.0, 1.0
        while booster.t < self.cfg.max_rounds_per_stage and not booster.finished:
            if booster.step() is None:
                break
            strong = booster.classifier()
            face_scores = strong.scores(self.face_val, self.ids)
            theta = stage_threshold(face_scores, self.cfg.d_min)
            detection_rate = float(np.mean(face_scores >= theta))
            fpr = float(np.mean(strong.scores(neg_val, self.ids) >= theta)) if len(neg_val) else 0.0
            stage = strong.with_threshold(theta)
            logger.debug(
                f"stage {index} round {booster.t}: theta={theta:.4g} detection={detection_rate:.4f} fpr={fpr:.4f}"
            )
            if fpr <= self.cfg.f_max:
                break
        booster.check_bound()
        self._log_rounds(index, booster)
        if stage is None:
            raise StageGoalError(f"stage {index}: the learner produced no round")

        degenerate = math.isinf(theta)
        if degenerate:
            logger.warning(f"stage {index}: d_min={self.cfg.d_min} admits theta=+inf, the stage rejects every window")
        if fpr > self.cfg.f_max:
            logger.warning(
                f"stage {index}: false-positive rate {fpr:.4f} above f_max={self.cfg.f_max} "
                f"after {booster.t} rounds"
            )
        report = StageReport(index, booster.t, theta, detection_rate, fpr, len(neg_train), degenerate)
        return stage, report

    def train(self) -> CascadeModel:
        """
        Add stages until the cumulative false-positive rate reaches
        ``target_fpr``, ``max_stages`` is hit or negatives run out.

        Raises:
            StageGoalError: if the first stage cannot reject any held-out negative
        """
        n_train = self.cfg.negative_ratio * len(self.face_train)
        n_val = self.cfg.negative_ratio * len(self.face_val)
        neg_train = np.zeros((0, len(self.ids)))
        neg_val = np.zeros((0, len(self.ids)))

        while len(self.stages) < self.cfg.max_stages:
            index = len(self.stages) + 1
            neg_train, exhausted = self._refill(neg_train, n_train)
            if self.shared_validation:
                neg_val = neg_train
            else:
                neg_val, _ = self._refill(neg_val, n_val)
            if not len(neg_train):
                self.stop_reason = "negatives exhausted"
                logger.warning(f"no negatives left for stage {index}, keeping {len(self.stages)} stages")
                break

            stage, report = self.train_stage(index, neg_train, neg_val)
            if report.false_positive_rate >= 1.0 and not report.degenerate:
                if not self.stages:
                    raise StageGoalError(
                        f"stage 1 keeps every held-out negative at d_min={self.cfg.d_min} "
                        f"(theta={report.threshold:.4g}, {report.rounds} rounds, {len(neg_train)} negatives)"
                    )
                self.stop_reason = "stage rejected"
                logger.warning(f"stage {index} rejects no held-out negative and is dropped")
                break

            self.stages.append(stage)
            self.reports.append(report)
            self.cumulative_fpr *= report.false_positive_rate
            logger.info(
                f"stage {index}: {report.rounds} rounds, detection {report.detection_rate:.4f}, "
                f"fpr {report.false_positive_rate:.4f}, cumulative fpr {self.cumulative_fpr:.3g}"
            )
            if self.cumulative_fpr <= self.cfg.target_fpr:
                self.stop_reason = "target reached"
                break
            if exhausted:
                self.stop_reason = "negatives exhausted"
                break
        else:
            self.stop_reason = "max stages"

        if not self.stages:
            raise StageGoalError("no stage could be trained")
        return self.model()

    def model(self) -> CascadeModel:
        used = sorted({f for stage in self.stages for f in stage.feature_ids})
        meta = {
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "scan": self.scan.to_dict(),
            "faces": {"train": len(self.face_train), "validation": len(self.face_val)},
            "candidate_features": len(self.candidates),
            "stages": [r.to_dict() for r in self.reports],
            "cumulative_false_positive_rate": self.cumulative_fpr,
            "stop_reason": self.stop_reason,
        }
        return CascadeModel(self.full_pool.subset(used), tuple(self.stages), meta)


def train_cascade(
    faces: np.ndarray,
    nonface_sources: Sequence[GrayImage],
    cfg: CascadeTrainingConfig,
    pool: Optional[FeaturePool] = None,
) -> CascadeModel:
    """Train a cascade; see CascadeTrainer."""
    return CascadeTrainer(faces, nonface_sources, cfg, pool).train()


def write_round_log(rows: Iterable[Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=ROUND_LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


# ----- Model files -----

def model_to_dict(model: CascadeModel) -> Dict[str, Any]:
    stages = []
    for stage in model.stages:
        payload = stage.to_dict()
        payload["threshold"] = encode_real(stage.threshold)
        stages.append(payload)
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "base": model.base,
        "pool_digest": model.pool_digest,
        "features": model.pool.to_dict(),
        "stages": stages,
        "training_meta": model.training_meta,
    }


def dumps_model(model: CascadeModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, allow_nan=False) + "\n"


def save_model(model: CascadeModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model), encoding="utf-8")
    logger.info(f"wrote {len(model)}-stage model to {path}")
    return path


def _check_pool(pool: FeaturePool, digest: str, source: str) -> None:
    full = feature_svc.enumerate_pool(pool.base)
    if digest != full.digest or pool.digest != full.digest:
        raise ModelFormatError(f"{source}: model was trained on another feature pool (digest {digest[:12]})")
    if len(pool) and pool.ids[-1] >= len(full):
        raise ModelFormatError(f"{source}: feature id {int(pool.ids[-1])} outside the pool")
    reference = full.subset(pool.ids)
    if not (np.array_equal(reference.kinds, pool.kinds) and np.array_equal(reference.anchors, pool.anchors)):
        raise ModelFormatError(f"{source}: feature geometry does not match the pool")


def loads_model(text: str, source: str = "<model>") -> CascadeModel:
    """
    Parse a model document.

    Raises:
        ModelFormatError: on invalid JSON (with line and column), an unknown
            format version, a pool mismatch or malformed content
    """
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{source}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(payload, dict):
        raise ModelFormatError(f"{source}: top level must be an object")
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{source}: unsupported format_version {payload.get('format_version')!r}")
    try:
        pool = FeaturePool.from_dict(payload["features"])
        if int(payload["base"]) != pool.base:
            raise ModelFormatError(f"{source}: base {payload['base']} does not match the pool base {pool.base}")
        _check_pool(pool, str(payload["pool_digest"]), source)
        stages = []
        for stage_payload in payload["stages"]:
            stage_payload = dict(stage_payload, threshold=decode_real(stage_payload["threshold"]))
            stages.append(StrongClassifier.from_dict(stage_payload))
        return CascadeModel(pool, tuple(stages), dict(payload.get("training_meta", {})))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise ModelFormatError(f"{source}: malformed model ({type(exc).__name__}: {exc})") from exc


def load_model(path: Union[str, Path]) -> CascadeModel:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: not UTF-8 (byte {exc.start})") from exc
    return loads_model(text, str(path))


# ----- Detection output -----

def write_detections(rows: Iterable[Tuple[str, Detection]], handle: IO[str]) -> int:
    """Write "path,x,y,w,h,score" rows; returns the number of detections."""
    writer = csv.DictWriter(handle, fieldnames=DETECTION_FIELDS, lineterminator="\n")
    writer.writeheader()
    count = 0
    for path, detection in rows:
        writer.writerow(detection.as_row(path))
        count += 1
    return count


def annotate(img: GrayImage, detections: Sequence[Detection]) -> bytes:
    """PPM copy of ``img`` with a 1-px intensity-255 box around each detection."""
    return imaging_svc.save_ppm(imaging_svc.draw_boxes(img, [d.rect for d in detections]))
