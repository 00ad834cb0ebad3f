"""CART classifier: Gini splits, saturated growth, cost-complexity pruning chosen by K-fold CV."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._trees import LEAF, Split, Tree, TreeBuilder, best_split as _best_split, check_width, partition, presort


def gini_impurity(labels) -> float:
    """N_l * p_l * (1 - p_l) for a node holding ``labels``."""
    y = np.asarray(labels, dtype=float)
    if y.size == 0:
        raise ValueError("Gini impurity of an empty node is undefined")
    n = y.size
    p = y.sum() / n
    return float(n * p * (1.0 - p))


def best_split(X, y, min_node_size: int = 1) -> Split | None:
    """Best Gini split of a node, or None when no split has positive gain."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return _best_split(X, presort(X), y, min_child=min_node_size)


@dataclass(frozen=True)
class CartModel:
    tree: Tree
    n_features: int
    pruning_trace: tuple[tuple[int, float], ...] = ()
    alpha: float = 0.0

    @property
    def n_leaves(self) -> int:
        return self.tree.n_leaves

    def predict(self, X) -> np.ndarray:
        X = check_width(X, self.n_features)
        return self.tree.predict(X).astype(int)


def _majority(n_pos: float, n_obs: int) -> int:
    # ties go to class 0
    return int(2 * n_pos > n_obs)


def grow(X: np.ndarray, y: np.ndarray, min_node_size: int = 5) -> Tree:
    """Grow the saturated tree: split every impure node that still admits a split.

    Zero-gain splits are accepted on impure nodes (e.g. XOR) so that growth
    only stops on purity, the ``min_node_size`` floor, or identical rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    b = TreeBuilder()

    def rec(order: np.ndarray) -> int:
        rows = order[:, 0] if order.shape[1] else None
        n = order.shape[0]
        n_pos = float(y[rows].sum()) if rows is not None else 0.0
        node = b.add(_majority(n_pos, n), n, n_pos)
        if 0 < n_pos < n and n >= 2 * min_node_size:
            split = _best_split(X, order, y, min_child=min_node_size)
            if split is None:
                split = _best_split(X, order, y, min_child=min_node_size, require_gain=False)
            if split is not None:
                goes_left = np.zeros(X.shape[0], dtype=bool)
                goes_left[rows] = X[rows, split.feature] <= split.threshold
                lo, hi = partition(order, goes_left, split.n_left)
                left = rec(lo)
                right = rec(hi)
                b.set_split(node, split.feature, split.threshold, left, right)
        return node

    if X.shape[1] == 0:
        n_pos = float(y.sum())
        b.add(_majority(n_pos, len(y)), len(y), n_pos)
    else:
        rec(presort(X))
    return b.build()


@dataclass
class PruningSequence:
    """Weakest-link pruning of one tree.

    ``alphas[k]`` is the complexity at which the k-th subtree becomes optimal
    (``alphas[0] == 0``); ``prune_alpha[i]`` is the complexity at which
    internal node ``i`` collapses into a leaf (inf for leaves).  Costs are
    misclassification rates, so alphas are comparable across sample sizes.
    """

    alphas: list[float]
    n_leaves: list[int]
    train_errors: list[float]
    prune_alpha: np.ndarray = field(repr=False)

    def stop_mask(self, alpha: float) -> np.ndarray:
        return self.prune_alpha <= alpha


def pruning_sequence(tree: Tree) -> PruningSequence:
    n_nodes = tree.n_nodes
    n_root = tree.n_obs[0]
    internal = tree.feature != LEAF
    node_err = np.minimum(tree.n_pos, tree.n_obs - tree.n_pos) / n_root
    end = tree.subtree_end()
    parent = np.full(n_nodes, -1, dtype=np.int64)
    for i in np.flatnonzero(internal):
        parent[tree.left[i]] = i
        parent[tree.right[i]] = i

    sub_err = node_err.copy()
    leaves = np.ones(n_nodes)
    for i in range(n_nodes - 1, -1, -1):
        if internal[i]:
            sub_err[i] = sub_err[tree.left[i]] + sub_err[tree.right[i]]
            leaves[i] = leaves[tree.left[i]] + leaves[tree.right[i]]

    active = internal.copy()
    prune_alpha = np.full(n_nodes, np.inf)
    alphas, n_leaves, errors = [], [], []
    alpha = 0.0
    while True:
        if active.any():
            idx = np.flatnonzero(active)
            g = (node_err[idx] - sub_err[idx]) / (leaves[idx] - 1.0)
            g_min = max(float(g.min()), 0.0)
        else:
            idx = np.empty(0, dtype=np.int64)
            g = np.empty(0)
            g_min = np.inf
        if alphas and g_min > alpha or not alphas and g_min > 0.0:
            alphas.append(alpha)
            n_leaves.append(int(leaves[0]))
            errors.append(float(sub_err[0]))
        if not active.any():
            break
        alpha = max(g_min, alpha)
        tol = 1e-12 * max(1.0, abs(g_min))
        for t in idx[g <= g_min + tol]:
            if not active[t]:
                continue
            span = slice(t, end[t])
            newly = active[span]
            prune_alpha[span][newly] = alpha
            active[span] = False
            d_err = sub_err[t] - node_err[t]
            d_leaves = leaves[t] - 1.0
            sub_err[t] = node_err[t]
            leaves[t] = 1.0
            a = parent[t]
            while a >= 0:
                sub_err[a] -= d_err
                leaves[a] -= d_leaves
                a = parent[a]
    return PruningSequence(alphas, n_leaves, errors, prune_alpha)


def prune(tree: Tree, stop: np.ndarray) -> Tree:
    """Compact copy of ``tree`` in which nodes flagged by ``stop`` become leaves."""
    b = TreeBuilder()

    def rec(i: int) -> int:
        node = b.add(tree.value[i], tree.n_obs[i], tree.n_pos[i])
        if tree.feature[i] != LEAF and not stop[i]:
            left = rec(int(tree.left[i]))
            right = rec(int(tree.right[i]))
            b.set_split(node, tree.feature[i], tree.threshold[i], left, right)
        return node

    rec(0)
    return b.build()


def _fold_ids(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % k
    return folds


def fit(X, y, min_node_size: int = 5, cv_folds: int | None = 10, seed: int = 0) -> CartModel:
    """Fit a CART classifier.

    The saturated tree is pruned to the subtree whose ``cv_folds``-fold
    cross-validated misclassification rate is lowest, ties going to the
    smaller tree.  ``cv_folds=None`` returns the saturated tree unpruned.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValueError("X must be 2-D with one row per label")
    if min_node_size < 1:
        raise ValueError("min_node_size must be at least 1")
    n = len(y)
    if n == 0:
        raise ValueError("cannot fit on an empty dataset")
    full = grow(X, y, min_node_size)
    if cv_folds is None:
        return CartModel(full, X.shape[1])
    if n < cv_folds:
        raise ValueError(f"need at least cv_folds={cv_folds} observations, got {n}")
    if full.n_nodes == 1:
        return CartModel(full, X.shape[1], ((1, float(np.mean(y != full.value[0]))),))

    seq = pruning_sequence(full)
    alphas = np.array(seq.alphas)
    # geometric midpoints between consecutive breakpoints; last subtree is the root
    probes = np.append(np.sqrt(alphas[:-1] * alphas[1:]), np.inf)
    folds = _fold_ids(n, cv_folds, np.random.default_rng(seed))
    cv_err = np.zeros(len(alphas))
    for k in range(cv_folds):
        test = folds == k
        t_k = grow(X[~test], y[~test], min_node_size)
        s_k = pruning_sequence(t_k)
        for j, beta in enumerate(probes):
            leaf = t_k.apply(X[test], stop=s_k.stop_mask(beta))
            cv_err[j] += np.sum(t_k.value[leaf] != y[test])
    cv_err /= n
    best = int(np.flatnonzero(cv_err == cv_err.min())[-1])
    tree = prune(full, seq.stop_mask(alphas[best]))
    trace = tuple((int(l), float(e)) for l, e in zip(seq.n_leaves, cv_err))
    return CartModel(tree, X.shape[1], trace, float(alphas[best]))


def predict(model: CartModel, X) -> np.ndarray:
    return model.predict(X)


def to_records(model: CartModel) -> dict:
    return {
        "tree": model.tree.to_records(),
        "n_features": model.n_features,
        "pruning_trace": [list(t) for t in model.pruning_trace],
        "alpha": model.alpha,
    }


def from_records(rec: dict) -> CartModel:
    return CartModel(
        tree=Tree.from_records(rec["tree"]),
        n_features=int(rec["n_features"]),
        pruning_trace=tuple((int(l), float(e)) for l, e in rec.get("pruning_trace", ())),
        alpha=float(rec.get("alpha", 0.0)),
    )
