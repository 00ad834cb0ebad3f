"""Customer lifetime value, confusion matrices and retention gains of an incentive campaign.

A campaign contacts every policy predicted to lapse at cost ``c`` and offers a
per-year profit give-back ``delta``.  Predicted lapsers who were going to
stay accept for sure and keep staying; true lapsers accept with probability
``gamma`` and then stay for the whole horizon.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ConsistencyError(ArithmeticError):
    pass


class Strategy(enum.Enum):
    Aggressive = "aggressive"
    Moderate = "moderate"


PUBLISHED_HORIZON = 12
PUBLISHED_PROFITABILITY = 0.005
PUBLISHED_DISCOUNT = 0.02
PUBLISHED_CONTACT_COST = 10.0
PUBLISHED_R_LAPSE = (0.96, 0.87, 0.67, 0.37, 0.27, 0.21, 0.15, 0.12, 0.10, 0.08, 0.06, 0.05, 0.04)
PUBLISHED_INCENTIVES = {
    Strategy.Aggressive: (0.0, 0.0, 0.0003, 0.0003, 0.0006, 0.0006, 0.0009, 0.0009, 0.0012, 0.0012, 0.0015, 0.0015, 0.0018),
    Strategy.Moderate: (0.0, 0.0, 0.00015, 0.00015, 0.0003, 0.0003, 0.00045, 0.00045, 0.0006, 0.0006, 0.0006, 0.0006, 0.0006),
}
PUBLISHED_ACCEPTANCE = {Strategy.Aggressive: 0.20, Strategy.Moderate: 0.10}


@dataclass(frozen=True)
class EconomicParams:
    horizon: int
    profitability: float
    discount: float
    contact_cost: float
    r_lapse: tuple[float, ...]
    incentive: tuple[float, ...]
    acceptance: float
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "r_lapse", tuple(float(v) for v in self.r_lapse))
        object.__setattr__(self, "incentive", tuple(float(v) for v in self.incentive))
        n = self.horizon + 1
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if len(self.r_lapse) != n or len(self.incentive) != n:
            raise ValueError(f"r_lapse and incentive must have length T+1 = {n}")
        if any(not 0.0 <= r <= 1.0 for r in self.r_lapse):
            raise ValueError("retention probabilities must lie in [0, 1]")
        if any(b > a for a, b in zip(self.r_lapse, self.r_lapse[1:])):
            raise ValueError("r_lapse must be non-increasing")
        if any(d < 0 for d in self.incentive):
            raise ValueError("incentives must be non-negative")
        if not 0.0 <= self.acceptance <= 1.0:
            raise ValueError("acceptance probability must lie in [0, 1]")

    @property
    def r_stay(self) -> tuple[float, ...]:
        return (1.0,) * (self.horizon + 1)

    @property
    def p_vec(self) -> np.ndarray:
        return np.full(self.horizon + 1, self.profitability)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "horizon": self.horizon,
            "profitability": self.profitability,
            "discount": self.discount,
            "contact_cost": self.contact_cost,
            "r_lapse": list(self.r_lapse),
            "incentive": list(self.incentive),
            "acceptance": self.acceptance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EconomicParams":
        return cls(**d)


def load_paper_presets(strategy: Strategy | str) -> EconomicParams:
    strategy = Strategy(strategy.lower()) if isinstance(strategy, str) else strategy
    ep = EconomicParams(
        horizon=PUBLISHED_HORIZON,
        profitability=PUBLISHED_PROFITABILITY,
        discount=PUBLISHED_DISCOUNT,
        contact_cost=PUBLISHED_CONTACT_COST,
        r_lapse=PUBLISHED_R_LAPSE,
        incentive=PUBLISHED_INCENTIVES[strategy],
        acceptance=PUBLISHED_ACCEPTANCE[strategy],
        name=strategy.value,
    )
    if ep.incentive[0] != 0.0 or ep.incentive[1] != 0.0:
        raise ValueError("preset incentives must start with two zero years")
    return ep


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts ``counts[j, k]`` and face sums ``face[j, k]``; j = actual, k = predicted."""

    counts: np.ndarray
    face: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"counts": self.counts.astype(int).tolist(), "face": self.face.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(np.asarray(d["counts"], dtype=np.int64), np.asarray(d["face"], dtype=float))


def confusion(labels, predictions, face_amounts=None) -> ConfusionMatrix:
    y = np.asarray(labels, dtype=int)
    yhat = np.asarray(predictions, dtype=int)
    if y.shape != yhat.shape:
        raise ValueError("labels and predictions must have equal length")
    f = np.zeros(len(y)) if face_amounts is None else np.asarray(face_amounts, dtype=float)
    if f.shape != y.shape:
        raise ValueError("face amounts must match labels in length")
    cell = 2 * y + yhat
    counts = np.bincount(cell, minlength=4).reshape(2, 2).astype(np.int64)
    face = np.bincount(cell, weights=f, minlength=4).reshape(2, 2)
    return ConfusionMatrix(counts, face)


def _discount_factors(horizon: int, d) -> np.ndarray:
    t = np.arange(horizon + 1)
    d = np.broadcast_to(np.asarray(d, dtype=float), (horizon + 1,))
    return (1.0 + d) ** (-t)


def clv(p_vec, face, r, d) -> float:
    """Discounted expected profit sum_t p_t F r_t / (1 + d_t)^t over t = 0..T."""
    p_vec = np.atleast_1d(np.asarray(p_vec, dtype=float))
    r = np.asarray(r, dtype=float)
    if p_vec.shape != r.shape:
        raise ValueError("profitability and retention vectors must have length T+1")
    d_arr = np.asarray(d, dtype=float)
    if d_arr.ndim and d_arr.shape != r.shape:
        raise ValueError("discount vector must have length T+1")
    return float(face * np.sum(p_vec * r * _discount_factors(len(r) - 1, d)))


def _annuities(ep: EconomicParams) -> dict[str, float]:
    """CLV per unit face amount for the streams that appear in the campaign algebra."""
    p = ep.p_vec
    delta = np.asarray(ep.incentive)
    return {
        "stay": clv(p, 1.0, ep.r_stay, ep.discount),
        "lapse": clv(p, 1.0, ep.r_lapse, ep.discount),
        "net_stay": clv(p - delta, 1.0, ep.r_stay, ep.discount),
        "incentive": clv(delta, 1.0, ep.r_stay, ep.discount),
    }


def reference_portfolio_value(cm: ConfusionMatrix, ep: EconomicParams) -> float:
    F = cm.face
    p = ep.p_vec
    return clv(p, F[0, 0] + F[0, 1], ep.r_stay, ep.discount) + clv(p, F[1, 0] + F[1, 1], ep.r_lapse, ep.discount)


def lapse_managed_portfolio_value(cm: ConfusionMatrix, ep: EconomicParams) -> float:
    F, N = cm.face, cm.counts
    p = ep.p_vec
    g = ep.acceptance
    net = p - np.asarray(ep.incentive)
    return (
        clv(p, F[0, 0], ep.r_stay, ep.discount)
        + clv(p, F[1, 0] + (1.0 - g) * F[1, 1], ep.r_lapse, ep.discount)
        + clv(net, F[0, 1] + g * F[1, 1], ep.r_stay, ep.discount)
        - ep.contact_cost * (N[0, 1] + N[1, 1])
    )


def retention_gain_closed_form(cm: ConfusionMatrix, ep: EconomicParams) -> float:
    """Expanded form: only contacted cells contribute."""
    F, N = cm.face, cm.counts
    p = ep.p_vec
    delta = np.asarray(ep.incentive)
    return (
        ep.acceptance * (clv(p - delta, F[1, 1], ep.r_stay, ep.discount) - clv(p, F[1, 1], ep.r_lapse, ep.discount))
        - clv(delta, F[0, 1], ep.r_stay, ep.discount)
        - ep.contact_cost * (N[0, 1] + N[1, 1])
    )


def retention_gain(cm: ConfusionMatrix, ep: EconomicParams, rtol: float = 1e-9) -> float:
    """LMPV - RPV, cross-checked against the expanded closed form."""
    rpv = reference_portfolio_value(cm, ep)
    lmpv = lapse_managed_portfolio_value(cm, ep)
    rg = lmpv - rpv
    closed = retention_gain_closed_form(cm, ep)
    scale = max(abs(rpv), abs(lmpv), abs(closed), 1.0)
    if abs(rg - closed) > rtol * scale:
        raise ConsistencyError(f"retention gain mismatch: {rg!r} vs closed form {closed!r}")
    return rg


def profit_target(face_amounts, labels, ep: EconomicParams) -> np.ndarray:
    """Per-policy gain (or loss) of contacting that policyholder.

    Stayers cost the incentive stream plus the contact; lapsers yield
    ``gamma * [CLV(p - delta, F, r_stay) - CLV(p, F, r_lapse)] - c``.
    """
    F = np.asarray(face_amounts, dtype=float)
    y = np.asarray(labels)
    if F.shape != y.shape:
        raise ValueError("face amounts and labels must have equal length")
    a = _annuities(ep)
    stay_cost = -a["incentive"] * F - ep.contact_cost
    lapse_gain = ep.acceptance * (a["net_stay"] - a["lapse"]) * F - ep.contact_cost
    return np.where(y == 1, lapse_gain, stay_cost)


def format_currency(value: float) -> str:
    return f"{value:.2f}"
