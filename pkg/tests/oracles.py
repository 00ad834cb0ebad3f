"""Independent reference computations used by the test suite.

Nothing here imports the code under test, so each check pairs an
implementation with a separately written route to the same number.
"""

from __future__ import annotations

import math

import numpy as np

PUBLISHED_CONFUSION = {
    # (actual stay -> predicted stay, predicted lapse), (actual lapse -> ...)
    "xgb": ((309_111, 38_450), (81_177, 137_660)),
    "svm": ((310_258, 37_303), (88_339, 130_498)),
    "cart": ((296_320, 51_241), (78_209, 140_628)),
    "lr": ((304_025, 43_537), (88_775, 130_062)),
}
PUBLISHED_ACCURACY = {"xgb": 0.7888, "svm": 0.7782, "cart": 0.7715, "lr": 0.7664}


def policy_value(face, profit, incentive, retention, discount, acceptance, contact_cost, lapser, contacted):
    """Expected value of one policy's cash-flow path, one year at a time."""
    value = 0.0
    for t in range(len(retention)):
        disc = (1.0 + discount) ** t
        keep = profit * face / disc
        keep_net = (profit - incentive[t]) * face / disc
        lapse_path = profit * face * retention[t] / disc
        if not contacted:
            value += lapse_path if lapser else keep
        elif lapser:
            value += acceptance * keep_net + (1.0 - acceptance) * lapse_path
        else:
            value += keep_net
    if contacted:
        value -= contact_cost
    return value


def portfolio_values(faces, labels, preds, profit, incentive, retention, discount, acceptance, contact_cost):
    """(RPV, LMPV) by valuing each policy path separately and summing."""
    rpv = 0.0
    lmpv = 0.0
    for f, y, yhat in zip(faces, labels, preds):
        rpv += policy_value(f, profit, incentive, retention, discount, acceptance, contact_cost, bool(y), False)
        lmpv += policy_value(f, profit, incentive, retention, discount, acceptance, contact_cost, bool(y), bool(yhat))
    return rpv, lmpv


def project_box_hyperplane(v, y, C, iters=64):
    """Euclidean projection onto {0 <= a <= C, y.a = 0} by bisection on the multiplier."""
    def a_of(lam):
        return np.clip(v - lam * y, 0.0, C)

    lo, hi = -1.0, 1.0
    while y @ a_of(lo) < 0:
        lo *= 2.0
    while y @ a_of(hi) > 0:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if y @ a_of(mid) > 0:
            lo = mid
        else:
            hi = mid
    return a_of(0.5 * (lo + hi))


def svm_dual_projected_gradient(K, y, C, iters=3000):
    """Maximize sum(a) - a'Qa/2 on the feasible set by accelerated projected gradient."""
    Q = (y[:, None] * y[None, :]) * K
    L = float(np.linalg.eigvalsh(Q).max()) + 1e-12
    a = np.zeros(len(y))
    z = a.copy()
    t = 1.0
    for _ in range(iters):
        a_new = project_box_hyperplane(z - (Q @ z - 1.0) / L, y, C)
        if (Q @ z - 1.0) @ (a_new - a) > 0:
            # momentum points uphill in the minimization form: restart
            t = 1.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = a_new + ((t - 1.0) / t_new) * (a_new - a)
        a, t = a_new, t_new
    return float(a.sum() - 0.5 * a @ Q @ a), a


def rbf_gram(X, gamma):
    n = len(X)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d = X[i] - X[j]
            K[i, j] = math.exp(-gamma * float(d @ d))
    return K


def bernoulli_loglik(beta, X, y):
    total = 0.0
    for xi, yi in zip(X, y):
        eta = beta[0] + float(np.dot(beta[1:], xi))
        total += yi * eta - (eta + math.log1p(math.exp(-eta)) if eta > 0 else math.log1p(math.exp(eta)))
    return total


def grid_refine_maximize(f, center, width, points=7, shrink=0.5, tol=1e-9):
    """Maximize a concave f by repeated grid search on a shrinking box around the incumbent."""
    center = np.asarray(center, dtype=float)
    dim = len(center)
    best = f(center)
    while width > tol:
        axes = [np.linspace(c - width, c + width, points) for c in center]
        moved = False
        for idx in np.ndindex(*(points,) * dim):
            cand = np.array([axes[d][idx[d]] for d in range(dim)])
            val = f(cand)
            if val > best:
                best, center, moved = val, cand, True
        if not moved:
            width *= shrink
    return center, best


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g
