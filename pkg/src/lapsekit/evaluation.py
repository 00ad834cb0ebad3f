"""Ten-fold evaluation protocol, grid-search tuners and report assembly.

The default orientation trains each model on ONE fold and tests it on the
other nine (``orientation="inverted"``); ``orientation="conventional"`` flips to
the usual train-on-nine, test-on-one split.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import boosting, cart, linear, svm
from .economics import ConfusionMatrix, EconomicParams, confusion, format_currency, profit_target, retention_gain
from .portfolio import Dataset

log = logging.getLogger(__name__)

FAMILIES = ("logit", "cart", "svm", "boost", "boost-profit")
SD_CONVENTION = "sample (n-1)"

PUBLISHED_GRID_BOOST = {
    "eta": (0.05, 0.1, 0.15),
    "gamma_reg": (0.0, 5.0, 10.0),
    "max_depth": (10, 15, 20, 25, 30),
    "min_child_weight": (15, 20, 25),
    "subsample": (1.0,),
    "colsample_bytree": (0.4, 0.5, 0.6),
}
PUBLISHED_GRID_SVM = {
    "cost": (0.5, 1.0, 2.0, 5.0, 10.0),
    "kernel_gamma": (0.25, 0.5, 0.75, 1.0, 1.25),
}
PUBLISHED_PROFIT_FIXED = {
    "eta": 0.005,
    "gamma_reg": 1.0,
    "max_depth": 15,
    "min_child_weight": 15,
    "subsample": 0.7,
    "colsample_bytree": 0.8,
}
GRID_PRESETS = {
    "published-boost": PUBLISHED_GRID_BOOST,
    "published-svm": PUBLISHED_GRID_SVM,
    "published-profit": PUBLISHED_PROFIT_FIXED,
}


class TuningError(ValueError):
    pass


def derive_seed(root: int, *keys: int) -> int:
    """Deterministic child seed for (root, keys...)."""
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def accuracy(cm: ConfusionMatrix) -> float:
    n = cm.n
    if n == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return float((cm.counts[1, 1] + cm.counts[0, 0]) / n)


def error_rate(cm: ConfusionMatrix) -> float:
    return float((cm.counts[0, 1] + cm.counts[1, 0]) / cm.n)


# ---------------------------------------------------------------- folds

@dataclass(frozen=True)
class SplitPlan:
    folds: np.ndarray
    seed: int
    n_folds: int = 10

    @classmethod
    def make(cls, n: int, seed: int, n_folds: int = 10) -> "SplitPlan":
        if n < n_folds:
            raise ValueError(f"need at least {n_folds} observations for {n_folds} folds, got {n}")
        rng = np.random.default_rng(seed)
        folds = np.empty(n, dtype=np.int64)
        folds[rng.permutation(n)] = np.arange(n) % n_folds + 1
        return cls(folds, seed, n_folds)

    def rounds(self, orientation: str = "inverted"):
        """Yield (fold id, train index, test index) for each round."""
        if orientation not in ("inverted", "conventional"):
            raise ValueError("orientation must be 'inverted' or 'conventional'")
        for k in range(1, self.n_folds + 1):
            in_k = self.folds == k
            if orientation == "inverted":
                yield k, np.flatnonzero(in_k), np.flatnonzero(~in_k)
            else:
                yield k, np.flatnonzero(~in_k), np.flatnonzero(in_k)

    def ledger(self, orientation: str = "inverted") -> tuple[np.ndarray, np.ndarray]:
        n = len(self.folds)
        train = np.zeros(n, dtype=np.int64)
        test = np.zeros(n, dtype=np.int64)
        for _, tr, te in self.rounds(orientation):
            train[tr] += 1
            test[te] += 1
        return train, test


# ---------------------------------------------------------------- model families

@dataclass(frozen=True)
class ConstantModel:
    """Stand-in when a training fold holds a single class."""

    label: int

    def predict(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.label, dtype=int)


def default_params(family: str) -> Any:
    if family == "logit":
        return {"max_iter": 100, "grad_tol": 1e-8}
    if family == "cart":
        return {"min_node_size": 5, "cv_folds": 10}
    if family == "svm":
        return svm.SvmParams()
    if family == "boost":
        return boosting.BoostParams(nrounds=100, eta=0.1, max_depth=4, min_child_weight=15)
    if family == "boost-profit":
        return boosting.BoostParams(
            nrounds=250, eta=0.05, max_depth=4, min_child_weight=100, gamma_reg=1.0,
            loss=boosting.Loss.SquaredError,
        )
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def coerce_params(family: str, params: Any) -> Any:
    if params is None:
        return default_params(family)
    if family in ("boost", "boost-profit"):
        if isinstance(params, Mapping):
            base = default_params(family).to_dict()
            base.update(params)
            params = boosting.BoostParams.from_dict(base)
        if family == "boost-profit" and params.loss is not boosting.Loss.SquaredError:
            params = replace(params, loss=boosting.Loss.SquaredError)
        if family == "boost" and params.loss is not boosting.Loss.Logistic:
            params = replace(params, loss=boosting.Loss.Logistic)
        return params
    if family == "svm" and isinstance(params, Mapping):
        base = default_params("svm").to_dict()
        base.update(params)
        return svm.SvmParams.from_dict(base)
    if family in ("logit", "cart"):
        base = default_params(family)
        base.update(dict(params))
        return base
    return params


def train(family: str, X: np.ndarray, target: np.ndarray, params: Any, seed: int = 0) -> Any:
    """Fit one model of ``family``; ``target`` is 0/1 labels, or profit targets for boost-profit."""
    params = coerce_params(family, params)
    if family != "boost-profit":
        y = np.asarray(target, dtype=int)
        if y.size and y.min() == y.max() and family in ("logit", "svm"):
            return ConstantModel(int(y[0]))
    if family == "logit":
        return linear.fit(X, target, **params)
    if family == "cart":
        return cart.fit(X, target, seed=seed, **params)
    if family == "svm":
        return svm.fit(X, target, replace(params, seed=seed))
    if family in ("boost", "boost-profit"):
        return boosting.fit(X, target, replace(params, seed=seed))
    raise ValueError(f"unknown model family {family!r}")


def classify(model: Any, X: np.ndarray) -> np.ndarray:
    if isinstance(model, boosting.BoostedModel):
        return boosting.predict_class(model, X)
    if isinstance(model, linear.LogitModel):
        return model.predict_class(X)
    return model.predict(X)


# ---------------------------------------------------------------- reports

@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    status: str = "ok"
    accuracy: float = float("nan")
    confusion: ConfusionMatrix | None = None
    retention_gains: dict[str, float] = field(default_factory=dict)
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "status": self.status,
            "accuracy": None if self.status != "ok" else self.accuracy,
            "confusion": None if self.confusion is None else self.confusion.to_dict(),
            "retention_gains": dict(self.retention_gains),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldResult":
        return cls(
            fold=d["fold"],
            n_train=d["n_train"],
            n_test=d["n_test"],
            status=d["status"],
            accuracy=float("nan") if d["accuracy"] is None else d["accuracy"],
            confusion=None if d["confusion"] is None else ConfusionMatrix.from_dict(d["confusion"]),
            retention_gains=dict(d["retention_gains"]),
            error=d.get("error", ""),
        )


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    mean = math.fsum(v) / v.size
    sd = float(np.std(v, ddof=1)) if v.size > 1 else float("nan")
    return mean, sd


@dataclass
class EvaluationReport:
    family: str
    params: dict
    seed: int
    orientation: str
    strategies: tuple[str, ...]
    folds: list[FoldResult]
    ledger: dict[str, dict[str, int]] = field(default_factory=dict)
    sd_convention: str = SD_CONVENTION

    @property
    def ok_folds(self) -> list[FoldResult]:
        return [f for f in self.folds if f.status == "ok"]

    @property
    def accuracies(self) -> list[float]:
        return [f.accuracy for f in self.ok_folds]

    def gains(self, strategy: str) -> list[float]:
        return [f.retention_gains[strategy] for f in self.ok_folds]

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        m, s = _mean_sd(self.accuracies)
        out["accuracy"] = {"mean": m, "sd": s}
        for name in self.strategies:
            m, s = _mean_sd(self.gains(name))
            out[f"rg_{name}"] = {"mean": m, "sd": s}
        return out

    def mean_confusion(self) -> ConfusionMatrix | None:
        ok = self.ok_folds
        if not ok:
            return None
        counts = sum(f.confusion.counts for f in ok) / len(ok)
        face = sum(f.confusion.face for f in ok) / len(ok)
        return ConfusionMatrix(counts, face)

    @property
    def tag(self) -> str:
        strat = "-".join(self.strategies) if self.strategies else "none"
        return f"{self.family}_{strat}_seed{self.seed}"

    def to_dict(self) -> dict:
        mcm = self.mean_confusion()
        return {
            "format": "lapsekit-report",
            "version": 1,
            "family": self.family,
            "params": self.params,
            "seed": self.seed,
            "orientation": self.orientation,
            "strategies": list(self.strategies),
            "sd_convention": self.sd_convention,
            "ledger": self.ledger,
            "folds": [f.to_dict() for f in self.folds],
            "summary": self.summary(),
            "mean_confusion": None if mcm is None else {"counts": mcm.counts.tolist(), "face": mcm.face.tolist()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            family=d["family"],
            params=d["params"],
            seed=d["seed"],
            orientation=d["orientation"],
            strategies=tuple(d["strategies"]),
            folds=[FoldResult.from_dict(f) for f in d["folds"]],
            ledger=d.get("ledger", {}),
            sd_convention=d.get("sd_convention", SD_CONVENTION),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "seed", "fold", "status", "metric", "value"])
        for f in self.folds:
            if f.status != "ok":
                w.writerow([self.family, self.seed, f.fold, f.status, "error", f.error])
                continue
            w.writerow([self.family, self.seed, f.fold, f.status, "accuracy", repr(f.accuracy)])
            for name in self.strategies:
                w.writerow([self.family, self.seed, f.fold, f.status, f"rg_{name}", format_currency(f.retention_gains[name])])
            for j in (0, 1):
                for k in (0, 1):
                    w.writerow([self.family, self.seed, f.fold, f.status, f"N({j},{k})", int(f.confusion.counts[j, k])])
                    w.writerow([self.family, self.seed, f.fold, f.status, f"F({j},{k})", format_currency(f.confusion.face[j, k])])
        return buf.getvalue()


# ---------------------------------------------------------------- protocols

def _run_fold(task: tuple) -> FoldResult:
    family, params, X, target, labels, face, train_idx, test_idx, eps, fold, seed = task
    res = FoldResult(fold=fold, n_train=len(train_idx), n_test=len(test_idx))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = train(family, X[train_idx], target[train_idx], params, seed=seed)
        yhat = classify(model, X[test_idx])
        cm = confusion(labels[test_idx], yhat, face[test_idx])
        res.confusion = cm
        res.accuracy = accuracy(cm)
        res.retention_gains = {ep.name: retention_gain(cm, ep) for ep in eps}
    except Exception as exc:  # noqa: BLE001 - a failed fold is reported, not fatal
        res.status = "failed"
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _execute(tasks: list[tuple], jobs: int) -> list[FoldResult]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_fold(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_fold, tasks))


def _params_record(params: Any) -> dict:
    if hasattr(params, "to_dict"):
        return params.to_dict()
    return dict(params)


def _protocol(
    dataset: Dataset,
    family: str,
    params: Any,
    target: np.ndarray,
    eps: Sequence[EconomicParams],
    seed: int,
    orientation: str,
    n_folds: int,
    jobs: int,
) -> EvaluationReport:
    if dataset.n_rows < n_folds:
        raise ValueError(f"need at least {n_folds} observations, got {dataset.n_rows}")
    params = coerce_params(family, params)
    plan = SplitPlan.make(dataset.n_rows, derive_seed(seed, 0), n_folds)
    tasks = []
    for k, tr, te in plan.rounds(orientation):
        tasks.append((
            family, params, dataset.features, target, dataset.labels, dataset.face_amounts,
            tr, te, tuple(eps), k, derive_seed(seed, 1, k),
        ))
    results = _execute(tasks, jobs)
    for r in results:
        if r.status != "ok":
            warnings.warn(f"fold {r.fold} failed and is excluded from aggregates: {r.error}", RuntimeWarning, stacklevel=3)
    train_count, test_count = plan.ledger(orientation)
    ledger = {
        "train_count_histogram": {str(k): int(v) for k, v in zip(*np.unique(train_count, return_counts=True))},
        "test_count_histogram": {str(k): int(v) for k, v in zip(*np.unique(test_count, return_counts=True))},
    }
    return EvaluationReport(
        family=family,
        params=_params_record(params),
        seed=seed,
        orientation=orientation,
        strategies=tuple(ep.name for ep in eps),
        folds=results,
        ledger=ledger,
    )


def run_protocol(
    dataset: Dataset,
    family: str,
    params: Any = None,
    eps: Sequence[EconomicParams] = (),
    seed: int = 0,
    orientation: str = "inverted",
    n_folds: int = 10,
    jobs: int = 1,
) -> EvaluationReport:
    """Evaluate a classification family over the 10-round protocol."""
    if family == "boost-profit":
        raise ValueError("use run_profit_protocol for profit-target boosting")
    return _protocol(dataset, family, params, np.asarray(dataset.labels), eps, seed, orientation, n_folds, jobs)


def run_profit_protocol(
    dataset: Dataset,
    ep: EconomicParams,
    params: Any = None,
    seed: int = 0,
    orientation: str = "inverted",
    n_folds: int = 10,
    jobs: int = 1,
) -> EvaluationReport:
    """Regress per-policy contact gains with squared-error boosting; contact iff predicted gain > 0."""
    z = profit_target(dataset.face_amounts, dataset.labels, ep)
    return _protocol(dataset, "boost-profit", params, z, (ep,), seed, orientation, n_folds, jobs)


# ---------------------------------------------------------------- tuning

def grid_points(grid: Mapping[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Cartesian product in lexicographic order of the listed values."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _check_tunable(n: int) -> None:
    if n < 10:
        raise TuningError(f"tuning needs at least 10 rows, got {n}")


def _kfold(n: int, k: int, seed: int) -> np.ndarray:
    if n < 2 * k:
        raise TuningError(f"{k}-fold cross-validation needs at least {2 * k} rows, got {n}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % k
    return folds


def _staged_cv(
    X: np.ndarray,
    target: np.ndarray,
    params: boosting.BoostParams,
    folds: np.ndarray,
    metric: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    """Mean CV metric after 1..nrounds trees (index m-1 holds the m-tree value)."""
    k = int(folds.max()) + 1
    total = np.zeros(params.nrounds)
    for f in range(k):
        test = folds == f
        model = boosting.fit(X[~test], target[~test], params)
        stages = model.staged_scores(X[test])
        next(stages)
        for m, score in enumerate(stages):
            total[m] += metric(target[test], score)
    return total / k


def _classification_error(y: np.ndarray, score: np.ndarray) -> float:
    return float(np.mean(y != (score > 0.0)))


def _mse(z: np.ndarray, score: np.ndarray) -> float:
    return float(np.mean((z - score) ** 2))


def tune_boost_classification(
    dataset: Dataset,
    seed: int = 0,
    grid: Mapping[str, Sequence[Any]] = PUBLISHED_GRID_BOOST,
    nrounds_max: int = 200,
    grid_folds: int = 2,
    rounds_folds: int = 5,
) -> tuple[boosting.BoostParams, dict]:
    """Grid search by 2-fold CV error, then the number of trees by 5-fold CV error.

    A grid point is scored by its best 2-fold error over 1..``nrounds_max``
    trees.  Ties go to the first point in grid order and to the fewest trees.
    """
    X, y = dataset.features, np.asarray(dataset.labels)
    _check_tunable(len(y))
    folds2 = _kfold(len(y), grid_folds, derive_seed(seed, 2))
    folds5 = _kfold(len(y), rounds_folds, derive_seed(seed, 5))
    best = None
    trace = []
    for i, point in enumerate(grid_points(grid)):
        params = boosting.BoostParams(nrounds=nrounds_max, seed=derive_seed(seed, 3, i), **point)
        curve = _staged_cv(X, y, params, folds2, _classification_error)
        err = float(curve.min())
        trace.append({"point": point, "cv_error": err})
        if best is None or err < best[0]:
            best = (err, point)
    params = boosting.BoostParams(nrounds=nrounds_max, seed=derive_seed(seed, 4), **best[1])
    curve = _staged_cv(X, y, params, folds5, _classification_error)
    m = int(np.argmin(curve)) + 1
    info = {"grid_size": len(trace), "grid_trace": trace, "nrounds_curve": curve.tolist()}
    return replace(params, nrounds=m), info


def tune_svm(
    dataset: Dataset,
    seed: int = 0,
    grid: Mapping[str, Sequence[Any]] = PUBLISHED_GRID_SVM,
    grid_folds: int = 2,
) -> tuple[svm.SvmParams, dict]:
    X, y = dataset.features, np.asarray(dataset.labels)
    _check_tunable(len(y))
    folds = _kfold(len(y), grid_folds, derive_seed(seed, 2))
    best = None
    trace = []
    for point in grid_points(grid):
        params = svm.SvmParams(seed=seed, **point)
        errs = []
        for f in range(grid_folds):
            test = folds == f
            model = train("svm", X[~test], y[~test], params, seed=seed)
            errs.append(float(np.mean(classify(model, X[test]) != y[test])))
        err = float(np.mean(errs))
        trace.append({"point": point, "cv_error": err})
        if best is None or err < best[0]:
            best = (err, point)
    return svm.SvmParams(seed=seed, **best[1]), {"grid_size": len(trace), "grid_trace": trace}


def tune_boost_profit(
    dataset: Dataset,
    seed: int = 0,
    fixed: Mapping[str, Any] = PUBLISHED_PROFIT_FIXED,
    nrounds_max: int = 1000,
    rounds_folds: int = 5,
) -> tuple[boosting.BoostParams, dict]:
    """Keep the fixed parameters; choose the number of trees by 5-fold CV mean squared error."""
    if dataset.targets is None:
        raise TuningError("profit tuning needs a dataset with profit targets")
    X, z = dataset.features, np.asarray(dataset.targets, dtype=float)
    _check_tunable(len(z))
    folds = _kfold(len(z), rounds_folds, derive_seed(seed, 5))
    params = boosting.BoostParams(nrounds=nrounds_max, loss=boosting.Loss.SquaredError, seed=derive_seed(seed, 4), **fixed)
    curve = _staged_cv(X, z, params, folds, _mse)
    m = int(np.argmin(curve)) + 1
    return replace(params, nrounds=m), {"nrounds_curve": curve.tolist()}
