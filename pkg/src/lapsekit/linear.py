"""Maximum-likelihood logistic regression fitted by Newton/IRLS with step halving."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._trees import check_width

RIDGE_JITTER = 1e-8


class SeparationWarning(RuntimeWarning):
    pass


class SingularSystemWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class LogitModel:
    intercept: float
    coefficients: np.ndarray
    converged: bool
    n_iterations: int
    separated: bool = False
    loglik_path: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return len(self.coefficients)

    def linear_predictor(self, X) -> np.ndarray:
        X = check_width(X, self.n_features)
        return self.intercept + X @ self.coefficients

    def predict_prob(self, X) -> np.ndarray:
        return _sigmoid(self.linear_predictor(X))

    def predict_class(self, X) -> np.ndarray:
        return (self.predict_prob(X) > 0.5).astype(int)


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def log_likelihood(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Log of the Bernoulli likelihood; ``beta[0]`` is the intercept."""
    eta = beta[0] + X @ beta[1:]
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def gradient(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    A = _design(X)
    return A.T @ (y - _sigmoid(A @ beta))


def fit(X, y, max_iter: int = 100, grad_tol: float = 1e-8) -> LogitModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if y.size == 0 or y.min() == y.max():
        raise ValueError("logistic regression needs both classes present")
    A = _design(X)
    n_par = A.shape[1]
    beta = np.zeros(n_par)
    p0 = y.mean()
    beta[0] = np.log(p0 / (1.0 - p0))
    ll = log_likelihood(beta, X, y)
    path = [ll]

    # conditioning check on the unweighted normal equations
    gram = A.T @ A
    ridge = 0.0
    if np.linalg.cond(gram) > 1e12:
        warnings.warn("near-singular design: ridge jitter added to normal equations", SingularSystemWarning, stacklevel=2)
        ridge = RIDGE_JITTER * max(1.0, float(np.trace(gram)) / n_par)

    converged = False
    separated = False
    norms: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        mu = _sigmoid(A @ beta)
        g = A.T @ (y - mu)
        if np.max(np.abs(g)) <= grad_tol:
            converged = True
            it -= 1
            break
        w = mu * (1.0 - mu)
        H = (A * w[:, None]).T @ A + ridge * np.eye(n_par)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            if ridge == 0.0:
                warnings.warn("singular Hessian: ridge jitter added", SingularSystemWarning, stacklevel=2)
            ridge = max(ridge, RIDGE_JITTER * max(1.0, float(np.trace(H)) / n_par))
            step = np.linalg.solve(H + ridge * np.eye(n_par), g)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = log_likelihood(cand, X, y)
            if ll_new >= ll or t < 1e-10:
                break
            t *= 0.5
        if ll_new < ll:
            break
        beta, ll = cand, ll_new
        path.append(ll)
        norms.append(float(np.linalg.norm(beta)))
        if _diverging(norms, mu):
            separated = True
            break

    mu = _sigmoid(A @ beta)
    if not converged and np.max(np.abs(A.T @ (y - mu))) <= grad_tol:
        converged = True
    if separated or (not converged and len(norms) >= 5 and norms[-1] > 2.0 * norms[-5] > 0):
        separated = True
        converged = False
        warnings.warn("coefficients diverge: data look (quasi-)separable", SeparationWarning, stacklevel=2)
    return LogitModel(float(beta[0]), beta[1:].copy(), converged, it, separated, tuple(path))


def _diverging(norms: list[float], mu: np.ndarray) -> bool:
    # steadily growing norm while fitted probabilities pile up at 0 or 1
    if len(norms) < 8:
        return False
    growing = all(b > a + 0.5 for a, b in zip(norms[-6:], norms[-5:]))
    saturated = np.mean((mu < 1e-6) | (mu > 1.0 - 1e-6)) > 0.5
    return growing and saturated and norms[-1] > 30.0


def predict_prob(model: LogitModel, X) -> np.ndarray:
    return model.predict_prob(X)


def predict_class(model: LogitModel, X) -> np.ndarray:
    return model.predict_class(X)


def to_records(model: LogitModel) -> dict:
    return {
        "intercept": model.intercept,
        "coefficients": model.coefficients.tolist(),
        "converged": model.converged,
        "n_iterations": model.n_iterations,
        "separated": model.separated,
        "loglik_path": list(model.loglik_path),
    }


def from_records(rec: dict) -> LogitModel:
    return LogitModel(
        intercept=float(rec["intercept"]),
        coefficients=np.asarray(rec["coefficients"], dtype=float),
        converged=bool(rec["converged"]),
        n_iterations=int(rec["n_iterations"]),
        separated=bool(rec.get("separated", False)),
        loglik_path=tuple(rec.get("loglik_path", ())),
    )
