"""
Sequential minimal optimisation for the soft-margin SVM dual.

Solves
    min  1/2 a'Qa - sum(a)   s.t.  y'a = 0,  0 <= a_i <= C_i
with Q_ij = y_i y_j K(x_i, x_j), two coefficients per step. The working pair
is the maximal KKT violator pair; the analytic pair update and the bias
estimate follow the usual libsvm formulation, with a separate upper bound per
sample so the same solver serves reweighted boosting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .kernels import KernelRowCache
from .models import SolverConfig

logger = logging.getLogger(__name__)

_TAU = 1e-12


@dataclass(frozen=True, eq=False)
class DualSolution:
    alpha: np.ndarray
    bias: float
    objective: float
    iterations: int
    converged: bool
    gap: float


def dual_objective(alpha: np.ndarray, y: np.ndarray, gram: np.ndarray) -> float:
    """1/2 a'Qa - sum(a) for a dense Gram matrix."""
    ya = alpha * y
    return float(0.5 * ya @ gram @ ya - alpha.sum())


def _select_pair(
    alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, upper: np.ndarray
) -> Tuple[int, int, float]:
    """Maximal violating pair (i in I_up, j in I_low) and the violation m - M."""
    below = alpha < upper
    above = alpha > 0
    up = np.where(y > 0, below, above)
    low = np.where(y > 0, above, below)
    if not up.any() or not low.any():
        return -1, -1, 0.0
    score = -y * grad
    up_scores = np.where(up, score, -np.inf)
    low_scores = np.where(low, score, np.inf)
    i = int(np.argmax(up_scores))
    j = int(np.argmin(low_scores))
    return i, j, float(up_scores[i] - low_scores[j])


def _update_pair(
    i: int, j: int, alpha: np.ndarray, grad: np.ndarray, y: np.ndarray,
    upper: np.ndarray, k_ii: float, k_jj: float, k_ij: float,
) -> None:
    c_i, c_j = upper[i], upper[j]
    if y[i] != y[j]:
        quad = max(k_ii + k_jj - 2.0 * k_ij, _TAU)
        delta = (-grad[i] - grad[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = diff
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = -diff
        if diff > c_i - c_j:
            if alpha[i] > c_i:
                alpha[i] = c_i
                alpha[j] = c_i - diff
        elif alpha[j] > c_j:
            alpha[j] = c_j
            alpha[i] = c_j + diff
    else:
        quad = max(k_ii + k_jj - 2.0 * k_ij, _TAU)
        delta = (grad[i] - grad[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > c_i:
            if alpha[i] > c_i:
                alpha[i] = c_i
                alpha[j] = total - c_i
        elif alpha[j] < 0:
            alpha[j] = 0.0
            alpha[i] = total
        if total > c_j:
            if alpha[j] > c_j:
                alpha[j] = c_j
                alpha[i] = total - c_j
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = total


def _bias(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, upper: np.ndarray) -> float:
    """b = -rho: average y*G over free coefficients, else the midpoint of the feasible interval."""
    y_grad = y * grad
    at_upper = alpha >= upper
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(y_grad[free].mean())
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = float(y_grad[ub_mask].min()) if ub_mask.any() else np.inf
        lb = float(y_grad[lb_mask].max()) if lb_mask.any() else -np.inf
        if np.isfinite(ub) and np.isfinite(lb):
            rho = (ub + lb) / 2.0
        else:
            rho = ub if np.isfinite(ub) else (lb if np.isfinite(lb) else 0.0)
    return -rho


def solve_dual(
    cache: KernelRowCache,
    y: np.ndarray,
    upper: np.ndarray,
    cfg: SolverConfig,
    max_iterations: Optional[int] = None,
) -> DualSolution:
    """
    Run SMO until the maximal KKT violation drops below ``cfg.kkt_tolerance``.

    Args:
        cache: Kernel rows of the training points
        y: (l,) labels as floats in {-1, +1}
        upper: (l,) per-sample box bounds C_i > 0
        cfg: Tolerance and sweep budget
        max_iterations: Override for the pair-update cap (default max_passes * l)

    Returns:
        DualSolution; ``converged`` is False when the cap was hit first
    """
    l = len(y)
    y = np.asarray(y, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    alpha = np.zeros(l)
    grad = -np.ones(l)
    cap = max_iterations if max_iterations is not None else cfg.max_passes * max(l, 1)

    iterations = 0
    gap = np.inf
    converged = False
    while iterations < cap:
        i, j, gap = _select_pair(alpha, grad, y, upper)
        if i < 0 or gap < cfg.kkt_tolerance:
            converged = True
            break
        row_i = cache.row(i)
        row_j = cache.row(j)
        old_i, old_j = alpha[i], alpha[j]
        _update_pair(i, j, alpha, grad, y, upper, cache.diagonal[i], cache.diagonal[j], row_i[j])
        d_i, d_j = alpha[i] - old_i, alpha[j] - old_j
        grad += y * (y[i] * d_i * row_i + y[j] * d_j * row_j)
        iterations += 1

    if not converged:
        logger.warning(f"SMO stopped after {iterations} updates with KKT gap {gap:.3g}")

    # Qa = G + 1
    objective = 0.5 * float(alpha @ (grad + 1.0)) - float(alpha.sum())
    return DualSolution(alpha, _bias(alpha, grad, y, upper), objective, iterations, converged, float(gap))
