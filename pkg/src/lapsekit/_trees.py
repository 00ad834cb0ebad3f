"""Flat binary trees and exhaustive split search shared by CART and boosting.

Both split criteria reduce to the same quantity: the Gini impurity
N p (1 - p) of a 0/1 node equals its sum of squared deviations from the node
mean, so a Gini split and a squared-error regression split are found by the
same cumulative-sum scan over presorted columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

LEAF = -1
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float
    n_left: int


def presort(X: np.ndarray) -> np.ndarray:
    """Column-wise stable argsort, shape (n_rows, n_features)."""
    return np.argsort(X, axis=0, kind="stable")


def partition(order: np.ndarray, goes_left: np.ndarray, n_left: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a presorted index matrix into its left/right children, keeping each column sorted."""
    mask = goes_left[order]
    n, p = order.shape
    left = order.T[mask.T].reshape(p, n_left).T
    right = order.T[~mask.T].reshape(p, n - n_left).T
    return left, right


def best_split(
    X: np.ndarray,
    order: np.ndarray,
    target: np.ndarray,
    min_child: int = 1,
    min_gain: float = 0.0,
    features: np.ndarray | None = None,
    require_gain: bool = True,
) -> Split | None:
    """Exhaustive search for the split maximizing the reduction in sum of squares.

    ``order`` holds the node's row indices sorted within each column of
    ``features`` (column j of ``order`` belongs to ``features[j]``).  Thresholds
    are midpoints of consecutive distinct values; equal gains resolve to the
    lowest feature index, then the lowest threshold.  Returns None unless some
    split beats both ``min_gain`` and a round-off floor; with
    ``require_gain=False`` the best admissible split is returned even at zero gain.
    """
    n, p = order.shape
    if p == 0 or n < 2 * min_child or n < 2:
        return None
    if features is None:
        features = np.arange(p)
    t = target[order[:, 0]]
    mean = t.mean()
    centered = target[order] - mean
    total_sq = float(np.sum(t * t))
    csum = np.cumsum(centered, axis=0)[:-1]
    s_tot = centered.sum(axis=0)
    k = np.arange(1, n, dtype=float)[:, None]
    s_right = s_tot - csum
    gain = csum * csum / k + s_right * s_right / (n - k) - s_tot * s_tot / n

    xs = X[order, features[None, :]]
    valid = xs[:-1] < xs[1:]
    if min_child > 1:
        kk = np.arange(1, n)
        valid &= ((kk >= min_child) & (n - kk >= min_child))[:, None]
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    # feature-major flattening so argmax's first hit is lowest feature, lowest threshold
    flat = gain.T.ravel()
    best = int(np.argmax(flat))
    best_gain = float(flat[best])
    if not np.isfinite(best_gain):
        return None
    if require_gain and not best_gain > max(min_gain, _GAIN_RTOL * total_sq):
        return None
    j, pos = divmod(best, n - 1)
    lo, hi = xs[pos, j], xs[pos + 1, j]
    threshold = float(lo + (hi - lo) / 2.0)
    if not threshold < hi:
        threshold = float(lo)
    return Split(int(features[j]), threshold, best_gain, pos + 1)


@dataclass(frozen=True)
class Tree:
    """Array-backed binary tree in depth-first preorder.

    Node ``i`` is a leaf when ``feature[i] == LEAF``.  Rows with
    ``x[feature] <= threshold`` go left.  Because nodes are stored in preorder,
    the subtree rooted at ``i`` occupies the index range ``[i, end[i])``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_obs: np.ndarray
    n_pos: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def apply(self, X: np.ndarray, stop: np.ndarray | None = None) -> np.ndarray:
        """Index of the node each row lands in; ``stop`` marks internal nodes treated as leaves."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        is_leaf = self.feature == LEAF
        if stop is not None:
            is_leaf = is_leaf | stop
        active = np.flatnonzero(~is_leaf[node])
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[~is_leaf[node[active]]]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def subtree_end(self) -> np.ndarray:
        end = np.empty(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes - 1, -1, -1):
            end[i] = i + 1 if self.feature[i] == LEAF else end[self.right[i]]
        return end

    def to_records(self, node: int = 0) -> dict[str, Any]:
        if self.feature[node] == LEAF:
            return {
                "leaf": True,
                "value": float(self.value[node]),
                "n_obs": int(self.n_obs[node]),
                "n_pos": float(self.n_pos[node]),
            }
        return {
            "leaf": False,
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "n_obs": int(self.n_obs[node]),
            "n_pos": float(self.n_pos[node]),
            "value": float(self.value[node]),
            "left": self.to_records(int(self.left[node])),
            "right": self.to_records(int(self.right[node])),
        }

    @classmethod
    def from_records(cls, rec: dict[str, Any]) -> "Tree":
        b = TreeBuilder()

        def walk(r: dict[str, Any]) -> int:
            i = b.add(r["value"], r["n_obs"], r.get("n_pos", 0.0))
            if not r["leaf"]:
                left = walk(r["left"])
                right = walk(r["right"])
                b.set_split(i, r["feature"], r["threshold"], left, right)
            return i

        walk(rec)
        return b.build()


class TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.n_obs: list[int] = []
        self.n_pos: list[float] = []

    def add(self, value: float, n_obs: int, n_pos: float = 0.0) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(value))
        self.n_obs.append(int(n_obs))
        self.n_pos.append(float(n_pos))
        return len(self.feature) - 1

    def set_split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value, dtype=float),
            n_obs=np.array(self.n_obs, dtype=np.int64),
            n_pos=np.array(self.n_pos, dtype=float),
        )


def check_width(X: np.ndarray, width: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != width:
        raise ValueError(f"expected a feature matrix with {width} columns, got shape {X.shape}")
    return X
