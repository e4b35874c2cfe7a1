"""
SVM training and evaluation services.

Usage:
    from svm import services as svm_svc
    model = svm_svc.train_svm(data, KernelSpec.rbf(1.0), C=1.0)
    scores = svm_svc.decision_batch(model, points)
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from haarboost_project.exceptions import DataError, SingleClassError

from .kernels import KernelRowCache, kernel_matrix
from .models import Dataset, KernelSpec, RbfSvmModel, SampleMode, SolverConfig
from .solver import solve_dual

logger = logging.getLogger(__name__)

MAX_REDRAWS = 10


def _fit(
    data: Dataset,
    k: KernelSpec,
    C: float,
    upper: np.ndarray,
    cfg: SolverConfig,
    seed: Optional[int],
) -> RbfSvmModel:
    y = data.labels.astype(np.float64)
    cache = KernelRowCache(k, data.points, cfg.cache_budget)
    solution = solve_dual(cache, y, upper, cfg)
    sv = solution.alpha > 0
    logger.debug(
        f"SVM fit: l={len(data)} sv={int(sv.sum())} iterations={solution.iterations} "
        f"cache hits={cache.hits} misses={cache.misses}"
    )
    return RbfSvmModel(
        kernel=k,
        C=C,
        support_vectors=data.points[sv].copy(),
        dual_coefs=(solution.alpha * y)[sv],
        bias=solution.bias,
        converged=solution.converged,
        iterations=solution.iterations,
        seed=seed,
    )


def train_svm(
    data: Dataset,
    k: KernelSpec,
    C: Optional[float] = None,
    cfg: Optional[SolverConfig] = None,
    seed: Optional[int] = None,
) -> RbfSvmModel:
    """
    Train a soft-margin SVM on ``data``.

    Args:
        data: Labelled points with both classes present
        k: Kernel
        C: Box constraint (settings default when omitted)
        cfg: Solver configuration (settings default when omitted)
        seed: Recorded on the model for reproducibility

    Returns:
        RbfSvmModel meeting the dual KKT conditions within cfg.kkt_tolerance,
        or the last iterate with ``converged=False``

    Raises:
        SingleClassError: if only one label is present
        ValidationError: if C is not positive
    """
    C = float(settings.HAARBOOST["SVM"]["C"] if C is None else C)
    if not C > 0:
        raise ValidationError({"C": f"C must be positive, got {C}"})
    cfg = cfg or SolverConfig.from_settings()
    data.require_both_classes()
    return _fit(data, k, C, np.full(len(data), C), cfg, seed)


def decision_batch(m: RbfSvmModel, points: np.ndarray) -> np.ndarray:
    """f(x) = sum_j coef_j K(sv_j, x) + b for every row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(m.support_vectors) and points.shape[1] != m.dimension:
        raise DataError(f"dimension mismatch: model has {m.dimension}, input has {points.shape[1]}")
    return kernel_matrix(m.kernel, points, m.support_vectors) @ m.dual_coefs + m.bias


def svm_decision(m: RbfSvmModel, x) -> float:
    return float(decision_batch(m, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def classify(m: RbfSvmModel, points: np.ndarray) -> np.ndarray:
    """Labels in {-1, +1}; a zero score counts as +1."""
    return np.where(decision_batch(m, points) >= 0, 1, -1).astype(np.int8)


def train_weighted_svm(
    data: Dataset,
    weights,
    k: KernelSpec,
    C: Optional[float] = None,
    cfg: Optional[SolverConfig] = None,
    mode: SampleMode = SampleMode.RESAMPLE,
    sample_size: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> RbfSvmModel:
    """
    Train an SVM that honours a distribution over the training samples.

    Resample draws ``sample_size`` (default len(data)) samples with replacement
    in proportion to ``weights`` and trains an ordinary SVM; a draw holding one
    class is redrawn up to MAX_REDRAWS times. Reweight keeps every sample and
    gives each its own box bound C_i = C * N * w_i.

    Raises:
        SingleClassError: if every resample was single-class, or the positively
            weighted samples hold one class
    """
    C = float(settings.HAARBOOST["SVM"]["C"] if C is None else C)
    if not C > 0:
        raise ValidationError({"C": f"C must be positive, got {C}"})
    cfg = cfg or SolverConfig.from_settings()
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(data),) or (w < 0).any() or not w.sum() > 0:
        raise ValidationError({"weights": "one non-negative weight per sample with positive total required"})
    w = w / w.sum()
    rng = rng if rng is not None else np.random.default_rng(seed)

    if SampleMode(mode) == SampleMode.REWEIGHT:
        keep = np.flatnonzero(w > 0)
        subset = data.take(keep)
        subset.require_both_classes()
        return _fit(subset, k, C, C * len(data) * w[keep], cfg, seed)

    n = sample_size or len(data)
    if n < 2:
        raise ValidationError({"sample_size": f"resample size must be >= 2, got {n}"})
    for attempt in range(MAX_REDRAWS + 1):
        drawn = data.take(rng.choice(len(data), size=n, replace=True, p=w))
        if (drawn.labels == 1).any() and (drawn.labels == -1).any():
            return _fit(drawn, k, C, np.full(n, C), cfg, seed)
        logger.debug(f"resample attempt {attempt + 1} drew a single class")
    raise SingleClassError(f"weighted resample of size {n} drew a single class {MAX_REDRAWS + 1} times")
