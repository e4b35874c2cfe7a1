"""
Corpus evaluation: annotation files, ROC curves, error tables and the
desk-scale experiments.

A corpus is scanned once per model. The ROC sweep then only re-thresholds
the cached final-stage scores, grouping raw hits once at the lowest
threshold of the sweep and keeping a group while its best score clears the
threshold.

Usage:
    from evalkit import services as eval_svc
    corpus = eval_svc.load_annotations("corpus/annotations.txt")
    points = eval_svc.roc_curve(model, corpus, ScanConfig.from_settings())
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from boosting.models import LearnerFamily
from boostsvm import services as boostsvm_svc
from cascade import services as cascade_svc
from cascade.detection import CandidateSet, merge_detections, scan_candidates
from cascade.models import CascadeModel, CascadeTrainingConfig, Detection, ScanConfig
from haarboost_project.context import get_worker_count
from haarboost_project.exceptions import AnnotationFormatError
from imaging import services as imaging_svc
from imaging.models import GrayImage, Rect
from svm import services as svm_svc

from . import synthetic
from .models import (
    AnnotatedCorpus,
    CorpusEntry,
    ErrorCell,
    ErrorTable,
    ImbalanceResult,
    ImbalanceRun,
    RocPoint,
)

logger = logging.getLogger(__name__)

ANNOTATIONS_NAME = "annotations.txt"

# row order of the learner comparison
TABLE_LEARNERS = (LearnerFamily.SVM, LearnerFamily.TREE, LearnerFamily.NET, LearnerFamily.STUMP)


# ----- Annotation files -----

def parse_annotations(text: str, source: str = "<annotations>", root: Optional[Path] = None) -> AnnotatedCorpus:
    """
    Parse "path x y w h" lines (one face per line). A line holding only a path
    lists an image without faces. Blank lines and lines starting with ``#``
    are skipped; rectangles of one image are gathered in file order.

    Raises:
        AnnotationFormatError: with ``source:line`` for any unparsable line
    """
    rects: Dict[str, List[Rect]] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (1, 5):
            raise AnnotationFormatError(f"{source}:{lineno}: expected 'path x y w h', got {line!r}")
        boxes = rects.setdefault(parts[0], [])
        if len(parts) == 1:
            continue
        try:
            boxes.append(Rect(*(int(v) for v in parts[1:])))
        except (ValueError, ValidationError) as exc:
            raise AnnotationFormatError(f"{source}:{lineno}: bad rectangle {parts[1:]}: {exc}") from exc
    return AnnotatedCorpus(tuple(CorpusEntry(path, tuple(boxes)) for path, boxes in rects.items()), root)


def load_annotations(path: Union[str, Path]) -> AnnotatedCorpus:
    """Read an annotation file; image paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise AnnotationFormatError(f"{path}: not UTF-8 ({exc.reason} at byte {exc.start})") from exc
    corpus = parse_annotations(text, str(path), path.parent)
    logger.info(f"loaded {len(corpus)} images with {corpus.total_truths} faces from {path}")
    return corpus


def format_annotations(corpus: AnnotatedCorpus) -> str:
    lines = []
    for entry in corpus.entries:
        if not entry.truths:
            lines.append(entry.path)
        lines.extend(f"{entry.path} {r.x} {r.y} {r.w} {r.h}" for r in entry.truths)
    return "".join(f"{line}\n" for line in lines)


def write_corpus(corpus: AnnotatedCorpus, directory: Union[str, Path]) -> Path:
    """
    Write every in-memory image as PGM under ``directory`` plus the
    annotation file, and return the annotation file's path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for entry in corpus.entries:
        if entry.image is not None:
            target = directory / entry.path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(imaging_svc.save_pgm(entry.image))
    annotations = directory / ANNOTATIONS_NAME
    annotations.write_bytes(format_annotations(corpus).encode("utf-8"))
    logger.info(f"wrote {len(corpus)} images and {corpus.total_truths} faces to {directory}")
    return annotations


# ----- Matching -----

def match_detections(detections: Sequence[Detection], truths: Sequence[Rect], min_iou: float) -> int:
    """
    Greedy matching in the given (score) order: each detection takes the
    unmatched truth it overlaps most, if that IoU is >= ``min_iou``.

    Returns:
        Number of matched detections; every truth is matched at most once
    """
    free = list(truths)
    matched = 0
    for d in detections:
        if not free:
            break
        overlaps = [d.rect.iou(t) for t in free]
        best = int(np.argmax(overlaps))
        if overlaps[best] >= min_iou:
            free.pop(best)
            matched += 1
    return matched


# ----- ROC -----

def scan_corpus(model: CascadeModel, corpus: AnnotatedCorpus, cfg: ScanConfig) -> List[CandidateSet]:
    """Final-stage candidates per image, in corpus order, scanned in parallel over images."""

    def scan(entry: CorpusEntry) -> CandidateSet:
        return scan_candidates(model, corpus.load_image(entry), cfg)

    workers = min(get_worker_count(), len(corpus))
    # pool threads start from an empty context, so each image scans its scales serially
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(scan, corpus.entries))
    return [scan(entry) for entry in corpus.entries]


def _check_sweep(sweep: Sequence[float]) -> List[float]:
    values = [float(v) for v in sweep]
    if not values:
        raise ValidationError({"sweep": "the threshold sweep is empty"})
    if any(math.isnan(v) for v in values):
        raise ValidationError({"sweep": "thresholds cannot be NaN"})
    return sorted(set(values), reverse=True)


def roc_curve(
    model: CascadeModel,
    corpus: AnnotatedCorpus,
    cfg: ScanConfig,
    sweep: Optional[Sequence[float]] = None,
    match_iou: Optional[float] = None,
) -> List[RocPoint]:
    """
    Detection rate against false detections while the final stage's
    threshold moves through ``sweep``.

    Without a sweep every distinct group score is used, bracketed by +inf
    (nothing kept) and -inf (everything kept).

    Returns:
        One RocPoint per distinct threshold, sorted by threshold descending

    Raises:
        ValidationError: empty corpus or empty sweep
    """
    if not len(corpus):
        raise ValidationError({"corpus": "the corpus has no images"})
    thetas = None if sweep is None else _check_sweep(sweep)
    match_iou = settings.HAARBOOST["EVAL"]["MATCH_IOU"] if match_iou is None else match_iou
    floor = -math.inf if thetas is None else thetas[-1]

    groups = [
        merge_detections(candidates.hits(floor), cfg.merge_min_neighbors, cfg.merge_overlap)
        for candidates in scan_corpus(model, corpus, cfg)
    ]
    if thetas is None:
        scores = sorted({d.score for image in groups for d in image}, reverse=True)
        thetas = [math.inf, *scores, -math.inf]

    total = corpus.total_truths
    points = []
    for theta in thetas:
        found = false = 0
        for image, entry in zip(groups, corpus.entries):
            kept = [d for d in image if d.score >= theta]
            hits = match_detections(kept, entry.truths, match_iou)
            found += hits
            false += len(kept) - hits
        points.append(RocPoint(false, found / total if total else 0.0, theta))
    logger.info(
        f"ROC over {len(corpus)} images: {len(points)} thresholds, "
        f"{points[-1].false_detections} false detections at the loosest"
    )
    return points


# ----- Error tables -----

def error_cell(name: str, points: Sequence[RocPoint], fd_target: int) -> ErrorCell:
    """Miss rate at the point with the most false detections not above the target."""
    eligible = [p for p in points if p.false_detections <= fd_target]
    if not eligible:
        return ErrorCell(name, fd_target, None)
    best = max(eligible, key=lambda p: (p.false_detections, p.detection_rate))
    return ErrorCell(name, fd_target, (1.0 - best.detection_rate) * 100.0, best.false_detections)


def error_table_from_curves(curves: Mapping[str, Sequence[RocPoint]], fd_targets: Sequence[int]) -> ErrorTable:
    cells = tuple(error_cell(name, points, int(t)) for name, points in curves.items() for t in fd_targets)
    return ErrorTable(tuple(curves), tuple(int(t) for t in fd_targets), cells)


def error_table(
    models: Mapping[str, CascadeModel],
    corpus: AnnotatedCorpus,
    cfg: ScanConfig,
    fd_targets: Optional[Sequence[int]] = None,
    sweep: Optional[Sequence[float]] = None,
) -> ErrorTable:
    """
    Error rate (%) = (1 - detection rate) x 100 per model and false-detection
    target; rows follow the order of ``models``.
    """
    fd_targets = settings.HAARBOOST["EVAL"]["FD_TARGETS"] if fd_targets is None else fd_targets
    if not fd_targets:
        raise ValidationError({"fd_targets": "at least one false-detection target is needed"})
    curves = {name: roc_curve(m, corpus, cfg, sweep) for name, m in models.items()}
    return error_table_from_curves(curves, fd_targets)


def compare_learners(
    faces: np.ndarray,
    nonface_sources: Sequence[GrayImage],
    corpus: AnnotatedCorpus,
    learners: Sequence[str] = TABLE_LEARNERS,
    scan: Optional[ScanConfig] = None,
    fd_targets: Optional[Sequence[int]] = None,
    **overrides,
) -> Tuple[Dict[str, CascadeModel], ErrorTable]:
    """
    Train one cascade per learner family on the same data and tabulate their
    error rates on ``corpus``. ``overrides`` go to CascadeTrainingConfig.
    """
    scan = scan or ScanConfig.from_settings()
    models: Dict[str, CascadeModel] = {}
    for learner in learners:
        cfg = CascadeTrainingConfig.from_settings(learner=learner, **overrides)
        logger.info(f"training the {learner} cascade")
        models[str(learner)] = cascade_svc.train_cascade(faces, nonface_sources, cfg)
    return models, error_table(models, corpus, scan, fd_targets)


# ----- Imbalance experiment -----

def _accuracy(predicted: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.asarray(predicted) == labels))


def imbalance_run(seed: int, n: int = 220, ratio: float = 10, gap: float = 2.0) -> ImbalanceRun:
    """
    One seed: AdaBoostSVM with the default sigma schedule against a single
    RBF-SVM fixed at that schedule's starting width sigma_ini.
    Training and test sets are independent draws.
    """
    train = synthetic.two_gaussians(n, ratio, [seed, 0], gap)
    test = synthetic.two_gaussians(n, ratio, [seed, 1], gap)

    cfg = boostsvm_svc.default_config(train, seed=seed)
    trainer = boostsvm_svc.fit_adaboost_svm(train, cfg)
    boosted = _accuracy(trainer.classifier().predict(test.points), test.labels)

    single_model = boostsvm_svc.single_svm_baseline(train, cfg.sigma_ini, seed=seed)
    single = _accuracy(svm_svc.classify(single_model, test.points), test.labels)

    logger.info(f"seed {seed}: AdaBoostSVM {boosted:.4f} ({trainer.t} rounds), single SVM {single:.4f}")
    return ImbalanceRun(seed, boosted, single, trainer.t, cfg.sigma_ini)


def imbalance_experiment(
    seeds: Sequence[int], n: int = 220, ratio: float = 10, gap: float = 2.0
) -> ImbalanceResult:
    if not seeds:
        raise ValidationError({"seeds": "at least one seed is needed"})
    result = ImbalanceResult(ratio, tuple(imbalance_run(s, n, ratio, gap) for s in seeds))
    logger.info(
        f"ratio {ratio}: AdaBoostSVM mean {result.boosted_mean:.4f}, single SVM mean "
        f"{result.single_mean:.4f}, AdaBoostSVM at least as good on {result.boosted_wins}/{len(seeds)} seeds"
    )
    return result
