"""Demand and lead-time laws, their samplers and maximum-likelihood fits.

Demand in a period is ``X * Y`` with ``X ~ Bernoulli(b)`` and
``Y ~ Poisson(mu)``: most periods see no demand at all, the rest draw a
Poisson quantity.  Lead-times are geometric on ``{1, 2, ...}`` so an order can
never arrive in the period it was placed.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Substream purposes.  Kept as small integers so the key stays a plain
# integer tuple for SeedSequence.
DEMAND = 1
LEAD_TIME = 2
POLICY = 3
INIT = 4
SHUFFLE = 5
ENV = 6

_SQRT2 = math.sqrt(2.0)


class HistoryError(ValueError):
    """A history series cannot be fitted."""


def _key_int(value) -> int:
    if isinstance(value, (int, np.integer)):
        if value < 0:
            raise ValueError(f"seed keys must be non-negative, got {value}")
        return int(value)
    return zlib.crc32(str(value).encode("utf-8"))


class RngStream:
    """A reproducible random stream identified by an integer key tuple.

    Streams are Philox-backed and derived through ``SeedSequence`` so any
    ``(root, replication, item, purpose)`` tuple gets its own independent
    substream.  The stream is single-owner; do not share it across threads.
    """

    def __init__(self, *key):
        if not key:
            raise ValueError("RngStream needs at least one key element")
        self.key = tuple(_key_int(k) for k in key)
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.key)))

    @property
    def seed(self) -> int:
        return self.key[0]

    def child(self, *key) -> "RngStream":
        return RngStream(*self.key, *key)

    def __repr__(self):
        return f"RngStream{self.key}"


@dataclass(frozen=True)
class DemandModel:
    b: float
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    @property
    def mean(self) -> float:
        return self.b * self.mu

    @property
    def variance(self) -> float:
        return self.b * self.mu * (1.0 + self.mu * (1.0 - self.b))

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class LeadTimeModel:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")

    @property
    def mean(self) -> float:
        return 1.0 / self.p

    @property
    def variance(self) -> float:
        return (1.0 - self.p) / self.p ** 2

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class HistorySeries:
    values: Sequence[int]
    kind: str = "demand"
    item_id: object = None

    def __post_init__(self):
        if self.kind not in ("demand", "lead_time"):
            raise ValueError(f"unknown history kind {self.kind!r}")
        self.values = [int(v) for v in self.values]


def sample_demand(model: DemandModel, rng: RngStream, size=None):
    gen = rng.generator
    # Draw both components unconditionally so the stream advances the same
    # way regardless of the Bernoulli outcome.
    hit = gen.random(size) < model.b
    qty = gen.poisson(model.mu, size)
    if size is None:
        return int(qty) if hit else 0
    return np.where(hit, qty, 0).astype(np.int64)


def sample_lead_time(model: LeadTimeModel, rng: RngStream, size=None):
    # numpy's geometric counts trials up to and including the first success,
    # i.e. support {1, 2, ...}.
    draw = rng.generator.geometric(model.p, size)
    if size is None:
        return int(draw)
    return draw.astype(np.int64)


def fit_demand_mle(history: HistorySeries | Sequence[int]) -> DemandModel:
    values = _values(history, "demand")
    if any(v < 0 for v in values):
        raise HistoryError("demand observations must be non-negative")
    positive = [v for v in values if v > 0]
    if not positive:
        raise HistoryError("no positive demand observations")
    return DemandModel(b=len(positive) / len(values), mu=sum(positive) / len(positive))


def fit_lead_time_mle(history: HistorySeries | Sequence[int]) -> LeadTimeModel:
    values = _values(history, "lead_time")
    for v in values:
        if v < 1:
            raise HistoryError(f"invalid lead-time observation: {v}")
    return LeadTimeModel(p=len(values) / sum(values))


def _values(history, kind):
    if isinstance(history, HistorySeries):
        if history.kind != kind:
            raise HistoryError(f"expected a {kind} history, got {history.kind}")
        values = history.values
    else:
        values = [int(v) for v in history]
    if not values:
        raise HistoryError("empty history")
    return values


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


# Coefficients of Acklam's rational approximation (relative error ~1e-9),
# refined below with Halley steps against the erfc-based CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def inverse_normal_cdf(alpha: float) -> float:
    """Quantile of the standard normal distribution."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha < _P_LOW:
        q = math.sqrt(-2.0 * math.log(alpha))
        z = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif alpha <= 1.0 - _P_LOW:
        q = alpha - 0.5
        r = q * q
        z = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-alpha))
        z = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    for _ in range(2):
        # Work in the tail nearest to z to avoid cancellation in 1 - cdf.
        if z <= 0.0:
            err = normal_cdf(z) - alpha
        else:
            err = (1.0 - alpha) - 0.5 * math.erfc(z / _SQRT2)
        u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * z * z)
        z = z - u / (1.0 + 0.5 * z * u)
    return z


def read_history_csv(path, value_column: str, kind: str) -> dict:
    """Group a history CSV into one ``HistorySeries`` per item.

    Demand files carry ``item_id, period, value``; lead-time files carry
    ``item_id, order_id, lead_time``.  Rows are ordered by their second
    column within each item.
    """
    order_column = "period" if kind == "demand" else "order_id"
    grouped: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        missing = {"item_id", order_column, value_column} - set(reader.fieldnames or ())
        if missing:
            raise HistoryError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                item = _parse_id(row["item_id"])
                order = int(row[order_column])
                value = int(row[value_column])
            except (TypeError, ValueError) as exc:
                raise HistoryError(f"{path}:{lineno}: {exc}") from None
            grouped.setdefault(item, []).append((order, value))
    return {item: HistorySeries([v for _, v in sorted(rows)], kind=kind, item_id=item)
            for item, rows in grouped.items()}


def _parse_id(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return text


def sample_history(model, rng: RngStream, n: int) -> list:
    """Synthetic history from a fitted law, mostly for round-trip checks."""
    if isinstance(model, DemandModel):
        return sample_demand(model, rng, size=n).tolist()
    return sample_lead_time(model, rng, size=n).tolist()
