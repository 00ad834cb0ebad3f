"""Policy records, feature encoding, CSV I/O and the synthetic portfolio generator."""

from __future__ import annotations

import csv
import dataclasses
import enum
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, stats


class ConfigError(ValueError):
    pass


class CsvFormatError(ValueError):
    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class Participation(enum.Enum):
    NonParticipating = "NonParticipating"
    Participating = "Participating"
    MandatoryParticipating = "MandatoryParticipating"


class ProductType(enum.Enum):
    Traditional = "Traditional"
    InterestAdjustable = "InterestAdjustable"
    InvestmentLinked = "InvestmentLinked"


class Channel(enum.Enum):
    TA = "TA"
    BK = "BK"
    DM = "DM"
    Other = "Other"


class PaymentMethod(enum.Enum):
    Insurer = "Insurer"
    BankOrCard = "BankOrCard"
    PostOrConvenience = "PostOrConvenience"


@dataclass(frozen=True)
class Policy:
    age: int
    gender: int
    occupation_extra_screening: int
    physical_exam_required: int
    nonlife_policy_count: int
    inception_date: date
    face_amount: float
    single_premium: int
    participation: Participation
    product_type: ProductType
    currency_ntd: int
    channel: Channel
    payment_method: PaymentMethod
    lapsed: int

    def __post_init__(self):
        if not 0 <= self.age <= 120:
            raise ValueError(f"age out of range: {self.age}")
        if not self.face_amount > 0:
            raise ValueError(f"face_amount must be positive: {self.face_amount}")
        if self.nonlife_policy_count < 0:
            raise ValueError("nonlife_policy_count must be non-negative")
        for name in BINARY_FIELDS + ("lapsed",):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")


POLICY_FIELDS: tuple[str, ...] = tuple(f.name for f in dataclasses.fields(Policy))
NUMERIC_FIELDS = ("age", "nonlife_policy_count", "inception_date", "face_amount")
BINARY_FIELDS = (
    "gender",
    "occupation_extra_screening",
    "physical_exam_required",
    "single_premium",
    "currency_ntd",
)
CATEGORICAL_FIELDS: dict[str, type[enum.Enum]] = {
    "participation": Participation,
    "product_type": ProductType,
    "channel": Channel,
    "payment_method": PaymentMethod,
}

WINDOW_START = date(1998, 1, 1)
WINDOW_END = date(2013, 7, 31)


# ---------------------------------------------------------------- generator

def _default_marginals() -> dict[str, dict[str, float]]:
    # published marginal proportions
    return {
        "gender": {"1": 0.48, "0": 0.52},
        "occupation_extra_screening": {"1": 0.195, "0": 0.805},
        "physical_exam_required": {"1": 0.036, "0": 0.964},
        "single_premium": {"1": 0.031, "0": 0.969},
        "currency_ntd": {"1": 0.881, "0": 0.119},
        "channel": {"TA": 0.939, "BK": 0.034, "DM": 0.024, "Other": 0.003},
        "payment_method": {"Insurer": 0.188, "BankOrCard": 0.708, "PostOrConvenience": 0.104},
        "participation": {
            "NonParticipating": 0.372,
            "Participating": 0.162,
            "MandatoryParticipating": 0.466,
        },
        "product_type": {"Traditional": 0.971, "InterestAdjustable": 0.017, "InvestmentLinked": 0.012},
    }


def _default_moments() -> dict[str, dict[str, float]]:
    return {
        "age": {"mean": 28.3, "sd": 16.8, "min": 0, "max": 80},
        "nonlife_policy_count": {"mean": 1.2, "sd": 2.0, "max": 33},
        "inception_date": {"mean_years": 7.43, "sd_years": 4.8},
        "face_amount": {"median": 10_000.0, "mean": 17_165.0, "min": 333.0, "max": 2_000_000.0},
    }


def _default_signal() -> dict[str, Any]:
    """Latent lapse-propensity coefficients on generator-scale covariates.

    Covariates: ``age_z`` = (age - 28.3) / 16.8, ``years`` = years since window
    start, ``log_face`` = log(face / 10,000), ``nonlife`` = count.  Indicator
    names are ``<field>`` for binary fields and ``<field>=<Level>`` for enums.
    """
    return {
        "linear": {
            "age_z": -0.25,
            "gender": -0.10,
            "occupation_extra_screening": 0.25,
            "physical_exam_required": -0.40,
            "nonlife": -0.20,
            "years": 0.06,
            "log_face": -0.15,
            "single_premium": -1.60,
            "currency_ntd": -0.30,
            "channel=BK": 0.50,
            "channel=DM": 0.90,
            "channel=Other": 0.40,
            "payment_method=Insurer": 0.80,
            "payment_method=PostOrConvenience": 1.10,
            "participation=Participating": 0.20,
            "participation=MandatoryParticipating": -0.30,
            "product_type=InterestAdjustable": 0.60,
            "product_type=InvestmentLinked": 0.90,
        },
        "interactions": [
            {"terms": ["payment_method=Insurer", "young"], "coef": 1.40},
            {"terms": ["recent", "log_face_pos"], "coef": 1.10},
            {"terms": ["occupation_extra_screening", "no_nonlife"], "coef": 0.90},
        ],
        "nonlinear": {
            "age_z_squared": 0.45,
            "recent": 1.20,
            "face_band_mid": -0.90,
        },
        "scale": 1.0,
    }


@dataclass
class GeneratorConfig:
    n_policies: int = 10_000
    seed: int = 0
    base_lapse_rate: float = 243_152 / 629_331
    marginals: dict[str, dict[str, float]] = field(default_factory=_default_marginals)
    moments: dict[str, dict[str, float]] = field(default_factory=_default_moments)
    signal: dict[str, Any] = field(default_factory=_default_signal)

    def validate(self) -> None:
        if self.n_policies <= 0:
            raise ConfigError("n_policies must be positive")
        if not 0.0 <= self.base_lapse_rate <= 1.0:
            raise ConfigError("base_lapse_rate must lie in [0, 1]")
        for name, props in self.marginals.items():
            total = sum(props.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"proportions for {name!r} sum to {total}, not 1")
            if any(v < 0 for v in props.values()):
                raise ConfigError(f"negative proportion in {name!r}")
            if name in CATEGORICAL_FIELDS:
                levels = {m.value for m in CATEGORICAL_FIELDS[name]}
                if set(props) - levels:
                    raise ConfigError(f"unknown levels for {name!r}: {sorted(set(props) - levels)}")
            elif name in BINARY_FIELDS:
                if set(props) - {"0", "1"}:
                    raise ConfigError(f"binary field {name!r} takes levels '0'/'1'")
            else:
                raise ConfigError(f"unknown marginal field {name!r}")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "GeneratorConfig":
        cfg = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        for key, value in raw.items():
            if key in ("marginals", "moments"):
                merged = getattr(cfg, key)
                for sub, props in value.items():
                    merged[sub] = {str(k): v for k, v in props.items()}
            elif key == "signal":
                merged = cfg.signal
                for sub, v in value.items():
                    merged[sub] = v
            else:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _draw_categorical(rng: np.random.Generator, props: Mapping[str, float], n: int) -> np.ndarray:
    levels = list(props)
    p = np.array([props[k] for k in levels], dtype=float)
    p = p / p.sum()
    idx = rng.choice(len(levels), size=n, p=p)
    return np.array(levels, dtype=object)[idx]


def _indicator(cols: Mapping[str, np.ndarray], name: str) -> np.ndarray:
    if "=" in name:
        fld, level = name.split("=", 1)
        return (cols[fld] == level).astype(float)
    return np.asarray(cols[name], dtype=float)


def _latent_score(cols: Mapping[str, np.ndarray], signal: Mapping[str, Any]) -> np.ndarray:
    n = len(cols["age"])
    age_z = (cols["age"] - 28.3) / 16.8
    years = cols["inception_days"] / 365.25
    log_face = np.log(cols["face_amount"] / 10_000.0)
    derived = {
        "age_z": age_z,
        "years": years,
        "log_face": log_face,
        "nonlife": cols["nonlife_policy_count"].astype(float),
        "young": (cols["age"] < 25).astype(float),
        "recent": (years > 10.0).astype(float),
        "log_face_pos": (log_face > 0).astype(float),
        "no_nonlife": (cols["nonlife_policy_count"] == 0).astype(float),
        "age_z_squared": age_z**2,
        "face_band_mid": ((cols["face_amount"] >= 5_000) & (cols["face_amount"] < 30_000)).astype(float),
    }

    def term(name: str) -> np.ndarray:
        return derived[name] if name in derived else _indicator(cols, name)

    score = np.zeros(n)
    for name, coef in signal.get("linear", {}).items():
        score += coef * term(name)
    for inter in signal.get("interactions", []):
        prod = np.ones(n)
        for name in inter["terms"]:
            prod = prod * term(name)
        score += inter["coef"] * prod
    for name, coef in signal.get("nonlinear", {}).items():
        score += coef * term(name)
    return signal.get("scale", 1.0) * score


def _calibrate_intercept(score: np.ndarray, target: float) -> float:
    def gap(b: float) -> float:
        return float(np.mean(_sigmoid(b + score))) - target

    lo, hi = -50.0 - score.max(), 50.0 - score.min()
    return optimize.brentq(gap, lo, hi, xtol=1e-12)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lapse_probability(cols: Mapping[str, np.ndarray], config: GeneratorConfig) -> np.ndarray:
    n = len(cols["age"])
    rate = config.base_lapse_rate
    if rate <= 0.0:
        return np.zeros(n)
    if rate >= 1.0:
        return np.ones(n)
    score = _latent_score(cols, config.signal)
    return _sigmoid(_calibrate_intercept(score, rate) + score)


def lapse_probabilities(policies: Sequence[Policy], config: GeneratorConfig) -> np.ndarray:
    """True lapse probabilities the generator used for ``policies`` drawn under ``config``."""
    cols: dict[str, np.ndarray] = {
        "age": np.array([p.age for p in policies], dtype=float),
        "nonlife_policy_count": np.array([p.nonlife_policy_count for p in policies]),
        "inception_days": np.array([(p.inception_date - WINDOW_START).days for p in policies], dtype=float),
        "face_amount": np.array([p.face_amount for p in policies], dtype=float),
    }
    for name in BINARY_FIELDS:
        cols[name] = np.array([getattr(p, name) for p in policies], dtype=int)
    for name in CATEGORICAL_FIELDS:
        cols[name] = np.array([getattr(p, name).value for p in policies], dtype=object)
    return _lapse_probability(cols, config)


def generate(config: GeneratorConfig) -> list[Policy]:
    """Draw a synthetic portfolio; a pure function of ``config`` (seed included)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_policies
    mom = config.moments

    a = mom["age"]
    shape = (a["mean"] / a["sd"]) ** 2
    age = rng.gamma(shape, a["sd"] ** 2 / a["mean"], size=n)
    age = np.clip(np.rint(age), a.get("min", 0), a.get("max", 120)).astype(int)

    c = mom["nonlife_policy_count"]
    # negative binomial matched on mean and variance
    r = c["mean"] ** 2 / max(c["sd"] ** 2 - c["mean"], 1e-9)
    nonlife = rng.negative_binomial(r, r / (r + c["mean"]), size=n)
    nonlife = np.minimum(nonlife, int(c.get("max", 10**6)))

    span_days = (WINDOW_END - WINDOW_START).days
    d = mom["inception_date"]
    loc, sd = d["mean_years"] * 365.25, d["sd_years"] * 365.25
    lo_z, hi_z = (0 - loc) / sd, (span_days - loc) / sd
    days = stats.truncnorm.rvs(lo_z, hi_z, loc=loc, scale=sd, size=n, random_state=rng)
    days = np.clip(np.floor(days), 0, span_days).astype(int)

    f = mom["face_amount"]
    sigma = math.sqrt(2.0 * math.log(f["mean"] / f["median"]))
    face = np.exp(math.log(f["median"]) + sigma * rng.standard_normal(n))
    face = np.round(np.clip(face, f["min"], f["max"]), 2)

    cols: dict[str, np.ndarray] = {
        "age": age,
        "nonlife_policy_count": nonlife,
        "inception_days": days,
        "face_amount": face,
    }
    for name in BINARY_FIELDS:
        cols[name] = _draw_categorical(rng, config.marginals[name], n).astype(int)
    for name in CATEGORICAL_FIELDS:
        cols[name] = _draw_categorical(rng, config.marginals[name], n)

    lapsed = (rng.random(n) < _lapse_probability(cols, config)).astype(int)

    policies = []
    for i in range(n):
        policies.append(
            Policy(
                age=int(age[i]),
                gender=int(cols["gender"][i]),
                occupation_extra_screening=int(cols["occupation_extra_screening"][i]),
                physical_exam_required=int(cols["physical_exam_required"][i]),
                nonlife_policy_count=int(nonlife[i]),
                inception_date=WINDOW_START + timedelta(days=int(days[i])),
                face_amount=float(face[i]),
                single_premium=int(cols["single_premium"][i]),
                participation=Participation(cols["participation"][i]),
                product_type=ProductType(cols["product_type"][i]),
                currency_ntd=int(cols["currency_ntd"][i]),
                channel=Channel(cols["channel"][i]),
                payment_method=PaymentMethod(cols["payment_method"][i]),
                lapsed=int(lapsed[i]),
            )
        )
    return policies


# ---------------------------------------------------------------- encoding

@dataclass(frozen=True)
class EncodingEntry:
    """How one Policy field maps onto feature columns.

    ``kind`` is one of ``numeric`` (standardized), ``binary`` (copied),
    ``onehot`` (reference level dropped) or ``label`` (no feature column).
    """

    field: str
    kind: str
    columns: tuple[int, ...]
    levels: tuple[str, ...] = ()
    reference: str | None = None
    mean: float = 0.0
    std: float = 1.0
    zero_variance: bool = False

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["columns"] = list(self.columns)
        d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EncodingEntry":
        d = dict(d)
        d["columns"] = tuple(d["columns"])
        d["levels"] = tuple(d.get("levels", ()))
        return cls(**d)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    face_amounts: np.ndarray
    encoding_map: tuple[EncodingEntry, ...]
    targets: np.ndarray | None = None

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if len(self.labels) != n or len(self.face_amounts) != n:
            raise ValueError("features, labels and face_amounts must share length")
        if self.targets is not None and len(self.targets) != n:
            raise ValueError("targets must match the number of rows")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain missing or non-finite values")
        for arr in (self.features, self.labels, self.face_amounts):
            arr.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def column_names(self) -> list[str]:
        names = [""] * self.n_features
        for e in self.encoding_map:
            if e.kind == "onehot":
                kept = [lv for lv in e.levels if lv != e.reference]
                for col, lv in zip(e.columns, kept):
                    names[col] = f"{e.field}={lv}"
            elif e.columns:
                names[e.columns[0]] = e.field
        return names

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            face_amounts=self.face_amounts[idx],
            encoding_map=self.encoding_map,
            targets=None if self.targets is None else self.targets[idx],
        )

    def with_targets(self, targets: np.ndarray) -> "Dataset":
        return dataclasses.replace(self, targets=np.asarray(targets, dtype=float))


def _raw_numeric(p: Policy, name: str, window_start: date) -> float:
    if name == "inception_date":
        return float((p.inception_date - window_start).days)
    return float(getattr(p, name))


def encode(
    policies: Sequence[Policy],
    encoding_map: Sequence[EncodingEntry] | None = None,
    window_start: date = WINDOW_START,
) -> Dataset:
    """Turn policies into a numeric design matrix.

    With ``encoding_map`` given, its standardization constants are reused so
    held-out data lands in the training coordinates.
    """
    if len(policies) == 0:
        raise ValueError("cannot encode an empty sequence of policies")
    n = len(policies)

    if encoding_map is None:
        entries: list[EncodingEntry] = []
        col = 0
        for name in POLICY_FIELDS:
            if name in NUMERIC_FIELDS:
                raw = np.array([_raw_numeric(p, name, window_start) for p in policies])
                mu, sd = float(raw.mean()), float(raw.std())
                zero = sd == 0.0
                entries.append(EncodingEntry(name, "numeric", (col,), mean=mu, std=1.0 if zero else sd, zero_variance=zero))
                col += 1
            elif name in BINARY_FIELDS:
                entries.append(EncodingEntry(name, "binary", (col,)))
                col += 1
            elif name in CATEGORICAL_FIELDS:
                levels = tuple(m.value for m in CATEGORICAL_FIELDS[name])
                k = len(levels) - 1
                entries.append(EncodingEntry(name, "onehot", tuple(range(col, col + k)), levels=levels, reference=levels[0]))
                col += k
            else:
                entries.append(EncodingEntry(name, "label", ()))
        encoding_map = tuple(entries)
    else:
        encoding_map = tuple(encoding_map)

    width = sum(len(e.columns) for e in encoding_map)
    X = np.zeros((n, width))
    for e in encoding_map:
        if e.kind == "numeric":
            raw = np.array([_raw_numeric(p, e.field, window_start) for p in policies])
            X[:, e.columns[0]] = 0.0 if e.zero_variance else (raw - e.mean) / e.std
        elif e.kind == "binary":
            X[:, e.columns[0]] = [getattr(p, e.field) for p in policies]
        elif e.kind == "onehot":
            kept = [lv for lv in e.levels if lv != e.reference]
            vals = np.array([getattr(p, e.field).value for p in policies], dtype=object)
            for c, lv in zip(e.columns, kept):
                X[:, c] = vals == lv
    labels = np.array([p.lapsed for p in policies], dtype=int)
    face = np.array([p.face_amount for p in policies], dtype=float)
    return Dataset(X, labels, face, encoding_map)


def encoding_map_to_dict(entries: Iterable[EncodingEntry]) -> list[dict[str, Any]]:
    return [e.to_dict() for e in entries]


def encoding_map_from_dict(raw: Iterable[Mapping[str, Any]]) -> tuple[EncodingEntry, ...]:
    return tuple(EncodingEntry.from_dict(d) for d in raw)


# ---------------------------------------------------------------- CSV

def _format_value(value: Any) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(policies: Iterable[Policy], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(POLICY_FIELDS)
        for p in policies:
            writer.writerow([_format_value(getattr(p, name)) for name in POLICY_FIELDS])


def _parse_value(name: str, text: str) -> Any:
    if name in CATEGORICAL_FIELDS:
        return CATEGORICAL_FIELDS[name](text)
    if name == "inception_date":
        return date.fromisoformat(text)
    if name == "face_amount":
        value = float(text)
        if not math.isfinite(value):
            raise ValueError("not finite")
        return value
    return int(text)


def read_csv(path: str | Path) -> list[Policy]:
    """Read policies written by :func:`write_csv`. Row numbers in errors are 1-based file lines."""
    out: list[Policy] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(header) != POLICY_FIELDS:
            raise CsvFormatError(1, "<header>", f"expected columns {list(POLICY_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(POLICY_FIELDS):
                raise CsvFormatError(lineno, "<row>", f"expected {len(POLICY_FIELDS)} fields, got {len(row)}")
            values = {}
            for name, text in zip(POLICY_FIELDS, row):
                if text.strip() == "":
                    raise CsvFormatError(lineno, name, "missing value")
                try:
                    values[name] = _parse_value(name, text)
                except ValueError as exc:
                    raise CsvFormatError(lineno, name, f"cannot parse {text!r} ({exc})") from None
            try:
                out.append(Policy(**values))
            except ValueError as exc:
                raise CsvFormatError(lineno, "<row>", str(exc)) from None
    return out
