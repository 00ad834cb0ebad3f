"""Soft-margin RBF support vector machine trained by sequential minimal optimization.

The dual is

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum(a_i y_i) = 0.

Each step updates the pair (i, j) with the largest error gap E_j - E_i among
indices that can still move in the feasible direction (the maximal violating
pair), which is the "maximal |E1 - E2|" second-choice rule restricted to
admissible pairs.  Only the two kernel rows of the working pair are computed
per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._trees import check_width

MAX_DESK_ROWS = 50_000
_TAU = 1e-12


@dataclass(frozen=True)
class SvmParams:
    cost: float = 1.0
    kernel_gamma: float = 0.5
    tolerance: float = 1e-3
    max_passes: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.cost > 0:
            raise ValueError("cost must be positive")
        if not self.kernel_gamma > 0:
            raise ValueError("kernel_gamma must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be positive")

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "kernel_gamma": self.kernel_gamma,
            "tolerance": self.tolerance,
            "max_passes": self.max_passes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmParams":
        return cls(**d)


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    alphas_times_labels: np.ndarray
    bias: float
    kernel_gamma: float
    converged: bool = True
    n_iterations: int = 0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X, chunk: int = 4096) -> np.ndarray:
        X = check_width(X, self.n_features)
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], chunk):
            block = X[start:start + chunk]
            out[start:start + chunk] = rbf_matrix(block, self.support_vectors, self.kernel_gamma) @ self.alphas_times_labels
        return out + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0.0).astype(int)


def rbf_kernel(x_i, x_j, kernel_gamma: float) -> float:
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != x_j.shape:
        raise ValueError("kernel arguments must have equal width")
    if not kernel_gamma > 0:
        raise ValueError("kernel_gamma must be positive")
    d = x_i - x_j
    return float(math.exp(-kernel_gamma * float(d @ d)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, kernel_gamma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-kernel_gamma * np.maximum(sq, 0.0))


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


class _KernelRows:
    """Kernel rows on demand; the full matrix is precomputed when it fits in memory."""

    def __init__(self, X: np.ndarray, gamma: float, full_limit: int = 4000):
        self.X = X
        self.gamma = gamma
        self.sq = (X * X).sum(1)
        self.full = rbf_matrix(X, X, gamma) if X.shape[0] <= full_limit else None

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        sq = self.sq + self.sq[i] - 2.0 * self.X @ self.X[i]
        return np.exp(-self.gamma * np.maximum(sq, 0.0))


def solve_dual(X: np.ndarray, y: np.ndarray, params: SvmParams) -> tuple[np.ndarray, float, bool, int]:
    """SMO on the dual; returns (alpha, bias, converged, iterations).

    Stops when the maximal KKT violation m(a) - M(a) is within ``tolerance``.
    Progress is checked once per sweep of N pair updates; ``max_passes``
    consecutive sweeps that fail to lower the smallest violation seen so far
    end the run with ``converged=False``.
    """
    n = len(y)
    C = params.cost
    rows = _KernelRows(X, params.kernel_gamma)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the minimization form: Q a - 1
    sweep = max(n, 10)
    best_gap = np.inf
    stalled = 0
    it = 0
    converged = False
    max_iter = 1000 * sweep
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        i = int(np.flatnonzero(up)[np.argmax(score[up])]) if up.any() else -1
        j = int(np.flatnonzero(low)[np.argmin(score[low])]) if low.any() else -1
        if i < 0 or j < 0:
            converged = True
            break
        gap = score[i] - score[j]
        if gap <= params.tolerance:
            converged = True
            break
        if it % sweep == 0:
            if gap < best_gap - 1e-12:
                best_gap = gap
                stalled = 0
            else:
                stalled += 1
                if stalled >= params.max_passes:
                    break
        it += 1

        Ki = rows.row(i)
        Kj = rows.row(j)
        eta = max(Ki[i] + Kj[j] - 2.0 * Ki[j], _TAU)
        # step along the direction that raises a_i y_i and lowers a_j y_j
        step = gap / eta
        # box limits in terms of t: a_i += y_i t, a_j -= y_j t
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(step, lim_i, lim_j)
        d_i = y[i] * t
        d_j = -y[j] * t
        alpha[i] = min(max(alpha[i] + d_i, 0.0), C)
        alpha[j] = min(max(alpha[j] + d_j, 0.0), C)
        grad += y * (Ki * y[i] * d_i + Kj * y[j] * d_j)

    bias = _bias(alpha, y, grad, C)
    return alpha, bias, converged, it


def _bias(alpha: np.ndarray, y: np.ndarray, grad: np.ndarray, C: float) -> float:
    # y_i f(x_i) = 1 on free vectors; f_i - b = y_i (grad_i + 1)
    yg = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    hi = yg[up].max() if up.any() else 0.0
    lo = yg[low].min() if low.any() else 0.0
    return float((hi + lo) / 2.0)


def fit(X, labels, params: SvmParams, allow_large: bool = False) -> SvmModel:
    """Train on 0/1 labels (mapped internally to -1/+1)."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ValueError("X must be 2-D with one row per label")
    n = len(labels)
    if n > MAX_DESK_ROWS and not allow_large:
        raise ValueError(f"SVM training refused for N={n} > {MAX_DESK_ROWS}; pass allow_large=True to override")
    y = np.where(labels == 1, 1.0, -1.0)
    if n < 2 or np.all(y > 0) or np.all(y < 0):
        raise ValueError("SVM training needs both classes present")
    alpha, bias, converged, it = solve_dual(X, y, params)
    sv = alpha > 0
    return SvmModel(
        support_vectors=X[sv].copy(),
        alphas_times_labels=(alpha * y)[sv],
        bias=bias,
        kernel_gamma=params.kernel_gamma,
        converged=converged,
        n_iterations=it,
    )


def predict(model: SvmModel, X) -> np.ndarray:
    return model.predict(X)


def to_records(model: SvmModel) -> dict:
    return {
        "support_vectors": model.support_vectors.tolist(),
        "alphas_times_labels": model.alphas_times_labels.tolist(),
        "bias": model.bias,
        "kernel_gamma": model.kernel_gamma,
        "converged": model.converged,
        "n_iterations": model.n_iterations,
        "n_features": model.n_features,
    }


def from_records(rec: dict) -> SvmModel:
    sv = np.asarray(rec["support_vectors"], dtype=float).reshape(-1, rec["n_features"])
    return SvmModel(
        support_vectors=sv,
        alphas_times_labels=np.asarray(rec["alphas_times_labels"], dtype=float),
        bias=float(rec["bias"]),
        kernel_gamma=float(rec["kernel_gamma"]),
        converged=bool(rec["converged"]),
        n_iterations=int(rec["n_iterations"]),
    )
