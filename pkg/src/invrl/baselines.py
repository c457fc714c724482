"""Non-learning controllers: safety-stock MinMax, clamped-normal Oracle and
a do-nothing control.

Every controller follows the same small protocol used by the evaluation
harness: ``reset(*seed_key)`` at the start of an episode, then
``act(state) -> list of order quantities`` once per period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from invrl.env import ClusterSpec, InventoryState
from invrl.stochastic import POLICY, RngStream, inverse_normal_cdf


def safety_stock(alpha: float, mu_d: float, sd_d: float, mu_t: float, sd_t: float) -> float:
    """Buffer covering demand and lead-time variability at service level ``alpha``.

    ``kappa = z_alpha * sqrt(mu_t * sd_d**2 + (mu_d * sd_t)**2)``
    """
    if min(mu_d, sd_d, mu_t, sd_t) < 0:
        raise ValueError("moments must be non-negative")
    z = inverse_normal_cdf(alpha)
    return z * math.sqrt(mu_t * sd_d ** 2 + (mu_d * sd_t) ** 2)


@dataclass(frozen=True)
class MinMaxPolicy:
    kappa: float
    order_up: int

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.order_up < 0:
            raise ValueError(f"order_up must be >= 0, got {self.order_up}")


@dataclass(frozen=True)
class OraclePolicy:
    mean: float
    std: float
    lo: int
    hi: int

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be >= 0, got {self.std}")
        if self.lo > self.hi:
            raise ValueError(f"empty clamp range [{self.lo}, {self.hi}]")


def minmax_act(policy: MinMaxPolicy, level: float) -> int:
    return policy.order_up if level < policy.kappa else 0


def minmax_order_up_to(policy: MinMaxPolicy, position: float) -> int:
    """(s, S) replenishment: below the trigger, order back up to ``order_up``."""
    if position < policy.kappa:
        return max(0, int(math.ceil(policy.order_up - position)))
    return 0


def oracle_act(policy: OraclePolicy, rng: RngStream) -> int:
    x = policy.mean + policy.std * rng.generator.standard_normal()
    x = min(max(x, policy.lo), policy.hi)
    return int(math.floor(x + 0.5))


class MinMaxController:
    """Safety-stock controller for a whole cluster.

    ``review="position"`` compares on-hand plus outstanding orders with the
    safety stock, ``review="on_hand"`` only the shelf stock.  ``quantity``
    chooses between topping the position up to the item capacity
    (``"up_to"``) and ordering the full item capacity (``"fixed"``).
    """

    name = "minmax"

    def __init__(self, policies, review: str = "position", quantity: str = "up_to"):
        if review not in ("position", "on_hand"):
            raise ValueError(f"unknown review mode {review!r}")
        if quantity not in ("up_to", "fixed"):
            raise ValueError(f"unknown quantity mode {quantity!r}")
        self.policies = list(policies)
        self.review = review
        self.quantity = quantity

    @classmethod
    def for_cluster(cls, cluster: ClusterSpec, alpha: float = 0.90, **kwargs):
        pols = []
        for it in cluster.items:
            kappa = safety_stock(alpha, it.demand.mean, it.demand.std, it.lead.mean, it.lead.std)
            pols.append(MinMaxPolicy(kappa, min(it.item_capacity, cluster.capacity)))
        return cls(pols, **kwargs)

    def reset(self, *seed_key):
        pass

    def act(self, state: InventoryState) -> list:
        levels = list(state.levels)
        if self.review == "position":
            for order in state.pending:
                levels[order.item_index] += order.quantity
        if self.quantity == "up_to":
            return [minmax_order_up_to(p, x) for p, x in zip(self.policies, levels)]
        return [minmax_act(p, x) for p, x in zip(self.policies, levels)]


class OracleController:
    name = "oracle"

    def __init__(self, policies, ids=None):
        self.policies = list(policies)
        self.ids = list(ids) if ids is not None else list(range(len(self.policies)))
        self._streams = None

    @classmethod
    def for_cluster(cls, cluster: ClusterSpec):
        pols = [OraclePolicy(it.demand.mean, it.demand.std, 0, cluster.capacity)
                for it in cluster.items]
        return cls(pols, cluster.ids)

    def reset(self, *seed_key):
        if not seed_key:
            seed_key = (0,)
        self._streams = [RngStream(*seed_key, i, POLICY) for i in self.ids]

    def act(self, state: InventoryState) -> list:
        if self._streams is None:
            self.reset()
        return [oracle_act(p, s) for p, s in zip(self.policies, self._streams)]


class ZeroController:
    name = "zero"

    def __init__(self, n_items: int):
        self.n_items = n_items

    @classmethod
    def for_cluster(cls, cluster: ClusterSpec):
        return cls(len(cluster))

    def reset(self, *seed_key):
        pass

    def act(self, state: InventoryState) -> list:
        return [0] * self.n_items


def baseline_controller(kind: str, cluster: ClusterSpec, alpha: float = 0.90, **kwargs):
    if kind == "minmax":
        return MinMaxController.for_cluster(cluster, alpha, **kwargs)
    if kind == "oracle":
        return OracleController.for_cluster(cluster)
    if kind == "zero":
        return ZeroController.for_cluster(cluster)
    raise ValueError(f"unknown baseline policy {kind!r}")
