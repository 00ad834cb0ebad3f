"""Gradient tree boosting with logistic or squared-error loss.

Each round fits a depth-limited regression tree to the pseudo-residuals on a
row/column subsample, sets leaf values by the loss-specific line search, and
adds them shrunk by ``eta``.  Stored leaf values already include the
shrinkage, so a score is ``f0 + sum(tree.predict(x))``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from ._trees import Tree, TreeBuilder, best_split, check_width, partition, presort

_P_CLAMP = 1e-12


class Loss(enum.Enum):
    Logistic = "logistic"
    SquaredError = "squared_error"


@dataclass(frozen=True)
class BoostParams:
    nrounds: int = 100
    eta: float = 0.1
    gamma_reg: float = 0.0
    max_depth: int = 6
    min_child_weight: int = 1
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    loss: Loss = Loss.Logistic
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.loss, str):
            object.__setattr__(self, "loss", Loss(self.loss))
        if self.nrounds < 0:
            raise ValueError("nrounds must be non-negative")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.gamma_reg < 0:
            raise ValueError("gamma_reg must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.min_child_weight < 1:
            raise ValueError("min_child_weight must be a positive count")
        if not 0.0 < self.subsample <= 1.0 or not 0.0 < self.colsample_bytree <= 1.0:
            raise ValueError("subsample and colsample_bytree must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "nrounds": self.nrounds,
            "eta": self.eta,
            "gamma_reg": self.gamma_reg,
            "max_depth": self.max_depth,
            "min_child_weight": self.min_child_weight,
            "subsample": self.subsample,
            "colsample_bytree": self.colsample_bytree,
            "loss": self.loss.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostParams":
        return cls(**d)


@dataclass(frozen=True)
class BoostedModel:
    f0: float
    trees: tuple[Tree, ...]
    loss: Loss
    n_features: int
    training_curve: tuple[float, ...] = ()

    def staged_scores(self, X) -> Iterator[np.ndarray]:
        """Yield the score after 0, 1, ..., M trees."""
        X = check_width(X, self.n_features)
        score = np.full(X.shape[0], self.f0)
        yield score.copy()
        for tree in self.trees:
            score += tree.predict(X)
            yield score.copy()

    def truncated(self, nrounds: int) -> "BoostedModel":
        return replace(self, trees=self.trees[:nrounds], training_curve=self.training_curve[:nrounds])


# ---------------------------------------------------------------- losses

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def logistic_loss(labels, scores) -> float:
    """Sum of y ln(1 + e^-s) + (1 - y) ln(1 + e^s), evaluated without overflow."""
    y = np.asarray(labels, dtype=float)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores must have equal length")
    return float(np.sum(y * np.logaddexp(0.0, -s) + (1.0 - y) * np.logaddexp(0.0, s)))


def squared_error(targets, scores) -> float:
    z = np.asarray(targets, dtype=float)
    s = np.asarray(scores, dtype=float)
    if z.shape != s.shape:
        raise ValueError("targets and scores must have equal length")
    return float(np.mean((z - s) ** 2)) if z.size else 0.0


def round_prob(probs) -> np.ndarray:
    return (np.asarray(probs, dtype=float) > 0.5).astype(int)


def error_metric(labels, probs) -> float:
    """Share of labels that differ from round(prob), where round(0.5) = 0."""
    y = np.asarray(labels)
    if y.shape != np.shape(probs):
        raise ValueError("labels and probabilities must have equal length")
    return float(np.mean(y != round_prob(probs)))


def training_loss(labels, scores, loss: Loss) -> float:
    if loss is Loss.Logistic:
        return logistic_loss(labels, scores)
    return squared_error(labels, scores)


def initial_score(labels, loss: Loss) -> float:
    y = np.asarray(labels, dtype=float)
    if y.size == 0:
        raise ValueError("initial score needs at least one label")
    if loss is Loss.SquaredError:
        return float(y.mean())
    n = y.size
    p = y.mean()
    if p <= 0.0 or p >= 1.0:
        warnings.warn("single-class labels: base rate clamped to [1/N, 1 - 1/N]", RuntimeWarning, stacklevel=2)
        p = min(max(p, 1.0 / n), 1.0 - 1.0 / n)
        if n == 1:
            p = 0.5
    return float(math.log(p / (1.0 - p)))


def pseudo_residuals(labels, scores, loss: Loss) -> np.ndarray:
    """Negative gradient of the loss in each score.

    The squared-error form drops the uniform 2/N factor of the mean-squared
    loss; leaf values are means, so the constant cancels.
    """
    y = np.asarray(labels, dtype=float)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores must have equal length")
    if loss is Loss.Logistic:
        return y - sigmoid(s)
    return y - s


def _hessian(scores: np.ndarray) -> np.ndarray:
    p = np.clip(sigmoid(scores), _P_CLAMP, 1.0 - _P_CLAMP)
    return p * (1.0 - p)


# ---------------------------------------------------------------- fitting

@dataclass
class BoostState:
    X: np.ndarray
    y: np.ndarray
    params: BoostParams
    f0: float
    scores: np.ndarray
    rng: np.random.Generator
    order: np.ndarray = field(repr=False)
    trees: list[Tree] = field(default_factory=list)
    curve: list[float] = field(default_factory=list)

    def model(self) -> BoostedModel:
        return BoostedModel(self.f0, tuple(self.trees), self.params.loss, self.X.shape[1], tuple(self.curve))


def init_state(X, y, params: BoostParams) -> BoostState:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    f0 = initial_score(y, params.loss)
    return BoostState(
        X=X,
        y=y,
        params=params,
        f0=f0,
        scores=np.full(len(y), f0),
        rng=np.random.default_rng(params.seed),
        order=presort(X),
    )


def _grow_regression_tree(
    X: np.ndarray,
    order: np.ndarray,
    features: np.ndarray,
    residual: np.ndarray,
    hess: np.ndarray | None,
    params: BoostParams,
) -> Tree:
    b = TreeBuilder()
    n_total = X.shape[0]

    def leaf_value(rows: np.ndarray) -> float:
        g = residual[rows].sum()
        if hess is None:
            gamma = g / len(rows)
        else:
            gamma = g / max(hess[rows].sum(), _P_CLAMP)
        return params.eta * float(gamma)

    def rec(sub: np.ndarray, depth: int) -> int:
        rows = sub[:, 0]
        node = b.add(leaf_value(rows), len(rows))
        if depth < params.max_depth:
            split = best_split(
                X, sub, residual,
                min_child=params.min_child_weight,
                min_gain=params.gamma_reg,
                features=features,
            )
            if split is not None:
                goes_left = np.zeros(n_total, dtype=bool)
                goes_left[rows] = X[rows, split.feature] <= split.threshold
                lo, hi = partition(sub, goes_left, split.n_left)
                left = rec(lo, depth + 1)
                right = rec(hi, depth + 1)
                b.set_split(node, split.feature, split.threshold, left, right)
        return node

    rec(order, 0)
    return b.build()


def fit_round(state: BoostState) -> BoostState:
    """One boosting round: subsample, fit a tree to pseudo-residuals, line-search leaves, update."""
    params = state.params
    X, y = state.X, state.y
    n, p = X.shape
    n_rows = math.ceil(params.subsample * n)
    n_cols = math.ceil(params.colsample_bytree * p)
    if n_rows < 1:
        raise ValueError("row subsample is empty")
    if n_rows < n:
        keep = np.zeros(n, dtype=bool)
        keep[state.rng.choice(n, size=n_rows, replace=False)] = True
    else:
        keep = None
    if n_cols < p:
        cols = np.sort(state.rng.choice(p, size=n_cols, replace=False))
    else:
        cols = np.arange(p)

    order = state.order[:, cols]
    if keep is not None:
        mask = keep[order]
        order = order.T[mask.T].reshape(len(cols), n_rows).T

    residual = pseudo_residuals(y, state.scores, params.loss)
    hess = _hessian(state.scores) if params.loss is Loss.Logistic else None
    if p == 0:
        rows = np.flatnonzero(keep) if keep is not None else np.arange(n)
        g = residual[rows].sum()
        gamma = g / len(rows) if hess is None else g / max(hess[rows].sum(), _P_CLAMP)
        b = TreeBuilder()
        b.add(params.eta * float(gamma), len(rows))
        tree = b.build()
    else:
        tree = _grow_regression_tree(X, order, cols, residual, hess, params)
    state.scores = state.scores + tree.predict(X)
    state.trees.append(tree)
    state.curve.append(training_loss(y, state.scores, params.loss))
    return state


def fit(X, y, params: BoostParams) -> BoostedModel:
    state = init_state(X, y, params)
    for _ in range(params.nrounds):
        fit_round(state)
    return state.model()


def predict_score(model: BoostedModel, X) -> np.ndarray:
    X = check_width(X, model.n_features)
    score = np.full(X.shape[0], model.f0)
    for tree in model.trees:
        score += tree.predict(X)
    return score


def predict_proba(model: BoostedModel, X) -> np.ndarray:
    return sigmoid(predict_score(model, X))


def predict_class(model: BoostedModel, X) -> np.ndarray:
    """Logistic: 1 iff sigmoid(score) > 0.5.  Squared error: 1 iff the estimated gain > 0."""
    score = predict_score(model, X)
    if model.loss is Loss.Logistic:
        return round_prob(sigmoid(score))
    return (score > 0.0).astype(int)


def to_records(model: BoostedModel) -> dict:
    return {
        "f0": model.f0,
        "loss": model.loss.value,
        "n_features": model.n_features,
        "training_curve": list(model.training_curve),
        "trees": [t.to_records() for t in model.trees],
    }


def from_records(rec: dict) -> BoostedModel:
    return BoostedModel(
        f0=float(rec["f0"]),
        trees=tuple(Tree.from_records(t) for t in rec["trees"]),
        loss=Loss(rec["loss"]),
        n_features=int(rec["n_features"]),
        training_curve=tuple(rec.get("training_curve", ())),
    )
