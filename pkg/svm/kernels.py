"""
Kernel functions and the per-training kernel row cache.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from haarboost_project.exceptions import DataError

from .models import KernelKind, KernelSpec


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DataError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def kernel_eval(k: KernelSpec, x, y) -> float:
    """K(x, y) for one pair of vectors."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    _check_dims(xv, yv)
    if k.kind == KernelKind.RBF:
        d = xv - yv
        return float(np.exp(-np.dot(d, d) / (2.0 * k.sigma * k.sigma)))
    if k.kind == KernelKind.POLYNOMIAL:
        return float((np.dot(xv, yv) + 1.0) ** k.degree)
    return float(np.tanh(np.dot(xv, yv) + k.offset))


def kernel_matrix(k: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Gram block K[i, j] = K(a_i, b_j).

    Args:
        k: Kernel
        a: (n, R) points
        b: (m, R) points

    Returns:
        (n, m) float64 array
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if b.size == 0:
        return np.zeros((len(a), 0))
    _check_dims(a, b)
    dots = a @ b.T
    if k.kind == KernelKind.RBF:
        sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * dots
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * k.sigma * k.sigma))
    if k.kind == KernelKind.POLYNOMIAL:
        return (dots + 1.0) ** k.degree
    return np.tanh(dots + k.offset)


def kernel_row(k: KernelSpec, points: np.ndarray, i: int) -> np.ndarray:
    """Row i of the training Gram matrix, computed from exact differences."""
    if k.kind == KernelKind.RBF:
        d = points - points[i]
        return np.exp(-(d * d).sum(axis=1) / (2.0 * k.sigma * k.sigma))
    return kernel_matrix(k, points[i:i + 1], points)[0]


class KernelRowCache:
    """Least-recently-used store of Gram rows, at most ``budget`` rows held."""

    def __init__(self, kernel: KernelSpec, points: np.ndarray, budget: int):
        self.kernel = kernel
        self.points = points
        self.budget = max(2, budget)
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.diagonal = np.array([kernel_eval(kernel, p, p) for p in points]) if len(points) else np.zeros(0)

    def row(self, i: int) -> np.ndarray:
        cached = self._rows.get(i)
        if cached is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return cached
        self.misses += 1
        row = kernel_row(self.kernel, self.points, i)
        self._rows[i] = row
        if len(self._rows) > self.budget:
            self._rows.popitem(last=False)
        return row

    def __len__(self) -> int:
        return len(self._rows)
