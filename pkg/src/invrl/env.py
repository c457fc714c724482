"""Shared-capacity multi-item inventory dynamics.

One period of a cluster runs: place orders (each gets a geometric lead-time),
receive the orders due now, scale the receipts down if they would overflow the
shared storage, serve demand from stock, and accumulate any unmet demand into
the backlog.  Costs are charged per item on the units ordered, the on-hand
stock at the start of the period and the cumulative backlog after it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from invrl.stochastic import (DEMAND, LEAD_TIME, DemandModel, LeadTimeModel, RngStream,
                              sample_demand, sample_lead_time)


class ConfigError(ValueError):
    pass


class ActionRangeError(ValueError):
    pass


@dataclass(frozen=True)
class CostWeights:
    alpha_order: float = 1.0 / 3.0
    alpha_hold: float = 1.0 / 3.0
    alpha_short: float = 1.0 / 3.0

    def __post_init__(self):
        ws = (self.alpha_order, self.alpha_hold, self.alpha_short)
        if any(not 0.0 <= w <= 1.0 for w in ws):
            raise ConfigError(f"cost weights must lie in [0, 1], got {ws}")
        if abs(sum(ws) - 1.0) > 1e-12:
            raise ConfigError(f"cost weights must sum to 1, got {sum(ws)!r}")


@dataclass(frozen=True)
class ItemSpec:
    id: object
    demand: DemandModel
    lead: LeadTimeModel
    cost_order: float
    cost_hold: float
    cost_short: float
    volume: float = 1.0
    capacity: Optional[int] = None
    initial_level: Optional[int] = None

    def __post_init__(self):
        for name in ("cost_order", "cost_hold", "cost_short"):
            if getattr(self, name) < 0:
                raise ConfigError(f"item {self.id}: {name} must be >= 0")
        if not self.volume > 0:
            raise ConfigError(f"item {self.id}: volume must be > 0")
        if self.capacity is not None and self.capacity <= 0:
            raise ConfigError(f"item {self.id}: capacity must be > 0")

    @property
    def default_capacity(self) -> int:
        """Four mean lead-time demands of headroom."""
        return max(1, math.ceil(4.0 * self.demand.mean / self.lead.p - 1e-9))

    @property
    def item_capacity(self) -> int:
        return self.capacity if self.capacity is not None else self.default_capacity


@dataclass(frozen=True)
class ClusterSpec:
    items: tuple
    capacity: int
    cost_weights: CostWeights = CostWeights()
    initial_levels: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ConfigError("a cluster needs at least one item")
        if int(self.capacity) != self.capacity or self.capacity <= 0:
            raise ConfigError(f"capacity must be a positive integer, got {self.capacity}")
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate item ids in cluster: {ids}")
        if self.initial_levels is not None:
            levels = tuple(int(x) for x in self.initial_levels)
            if len(levels) != len(self.items):
                raise ConfigError("initial_levels must give one level per item")
            object.__setattr__(self, "initial_levels", levels)

    @classmethod
    def from_items(cls, items, capacity=None, cost_weights=None, initial_levels=None):
        items = tuple(items)
        if capacity is None:
            capacity = sum(it.item_capacity for it in items)
        return cls(items, int(capacity), cost_weights or CostWeights(),
                   None if initial_levels is None else tuple(initial_levels))

    def __len__(self):
        return len(self.items)

    @property
    def ids(self):
        return [it.id for it in self.items]

    @property
    def volumes(self):
        return [it.volume for it in self.items]

    @property
    def shared(self) -> bool:
        return len(self.items) > 1


@dataclass(frozen=True)
class PendingOrder:
    item_index: int
    quantity: int
    arrival_period: int


@dataclass
class InventoryState:
    t: int
    levels: list
    backlogs: list
    pending: list = field(default_factory=list)
    last_arrival: list = field(default_factory=list)
    last_lead: list = field(default_factory=list)

    def copy(self) -> "InventoryState":
        return InventoryState(self.t, list(self.levels), list(self.backlogs), list(self.pending),
                              list(self.last_arrival), list(self.last_lead))


@dataclass
class StepOutcome:
    actions: list
    arrivals: list
    weights: list
    overflow: bool
    space: float
    received: list
    demands: list
    lead_times: list
    costs: list
    raw_costs: list
    rewards: list
    cluster_reward: float
    shortage_flags: list


class EnvStreams:
    """Per-item demand and lead-time substreams for one episode."""

    def __init__(self, cluster: ClusterSpec, *seed_key):
        self.demand = [RngStream(*seed_key, it.id, DEMAND) for it in cluster.items]
        self.lead = [RngStream(*seed_key, it.id, LEAD_TIME) for it in cluster.items]


def initial_levels(cluster: ClusterSpec, override=None) -> list:
    n = len(cluster)
    if override is not None:
        levels = [int(x) for x in override]
        if len(levels) != n:
            raise ConfigError("initial level override must give one level per item")
    elif cluster.initial_levels is not None:
        levels = list(cluster.initial_levels)
    else:
        levels = []
        for it in cluster.items:
            if it.initial_level is not None:
                levels.append(int(it.initial_level))
            else:
                levels.append(int(math.floor(cluster.capacity / (2 * n * it.volume))))
    if any(x < 0 for x in levels):
        raise ConfigError(f"initial levels must be non-negative, got {levels}")
    used = sum(x * v for x, v in zip(levels, cluster.volumes))
    if used > cluster.capacity:
        raise ConfigError(f"initial levels occupy {used} > capacity {cluster.capacity}")
    return levels


def reset(cluster: ClusterSpec, seed=None, initial=None) -> InventoryState:
    """Fresh state at t=0.  ``seed`` is accepted for symmetry with ``step``;
    the random streams themselves live in ``EnvStreams``."""
    n = len(cluster)
    return InventoryState(t=0, levels=initial_levels(cluster, initial), backlogs=[0] * n,
                          pending=[], last_arrival=[0] * n, last_lead=[0] * n)


def available_space(state: InventoryState, cluster: ClusterSpec) -> float:
    return cluster.capacity - sum(x * v for x, v in zip(state.levels, cluster.volumes))


def collect_arrivals(state: InventoryState, n_items: Optional[int] = None) -> list:
    """Pop every order due at ``state.t`` and return received units per item."""
    if n_items is None:
        n_items = len(state.levels)
    arrivals = [0] * n_items
    keep = []
    for order in state.pending:
        if order.arrival_period == state.t:
            arrivals[order.item_index] += order.quantity
        else:
            keep.append(order)
    state.pending = keep
    return arrivals


def overflow_weights(delta: float, arrivals: Sequence, shortage_costs: Sequence,
                     volumes: Optional[Sequence] = None) -> list:
    """Receipt weights for one cluster.

    Without overflow every weight is 1.  On overflow the weights are
    proportional to the shortage cost and scaled so the weighted receipts
    exactly fill ``delta``.  If every arriving item has zero shortage cost the
    split falls back to being proportional to the arrivals themselves.
    """
    if delta < 0:
        raise ValueError(f"available space must be non-negative, got {delta}")
    n = len(arrivals)
    if volumes is None:
        volumes = [1.0] * n
    incoming = sum(r * v for r, v in zip(arrivals, volumes))
    if incoming <= delta:
        return [1.0] * n
    denom = sum(c * r * v for c, r, v in zip(shortage_costs, arrivals, volumes))
    if denom > 0:
        return [delta * c / denom for c in shortage_costs]
    denom = sum(r * r * v for r, v in zip(arrivals, volumes))
    return [delta * r / denom for r in arrivals]


def _received(delta, arrivals, weights, volumes):
    # Never receive more than actually arrived; weights above 1 would
    # otherwise create stock.
    got = [min(r, int(math.floor(w * r + 1e-9))) for w, r in zip(weights, arrivals)]
    used = sum(g * v for g, v in zip(got, volumes))
    while used > delta + 1e-12:
        i = max(range(len(got)), key=lambda k: (got[k] * volumes[k], -k))
        got[i] -= 1
        used -= volumes[i]
    return got


def step_cost(action, level, backlog_after, spec: ItemSpec, weights: CostWeights):
    """Weighted cost of one item-period and the raw (order, hold, short) money.

    ``level`` is the on-hand stock at the start of the period and
    ``backlog_after`` the cumulative backlog after demand was served.
    """
    raw = (action * spec.cost_order, level * spec.cost_hold, backlog_after * spec.cost_short)
    weighted = (weights.alpha_order * raw[0] + weights.alpha_hold * raw[1]
                + weights.alpha_short * raw[2])
    return weighted, raw


def cluster_reward(rewards: Sequence) -> float:
    if len(rewards) == 0:
        raise ValueError("cluster_reward needs at least one reward")
    return math.fsum(rewards) / len(rewards)


def step(state: InventoryState, cluster: ClusterSpec, actions: Sequence, rng: EnvStreams):
    """Advance the cluster by one period.  Returns ``(new_state, outcome)``;
    the input state is left untouched."""
    n = len(cluster)
    if len(actions) != n:
        raise ActionRangeError(f"expected {n} actions, got {len(actions)}")
    acts = []
    for a in actions:
        if int(a) != a or not 0 <= a <= cluster.capacity:
            raise ActionRangeError(f"action {a} outside {{0, ..., {cluster.capacity}}}")
        acts.append(int(a))

    new = state.copy()
    t = state.t
    items = cluster.items
    leads = [None] * n
    for i, a in enumerate(acts):
        if a > 0:
            tau = sample_lead_time(items[i].lead, rng.lead[i])
            leads[i] = tau
            new.last_lead[i] = tau
            new.pending.append(PendingOrder(i, a, t + tau))

    arrivals = collect_arrivals(new, n)
    volumes = cluster.volumes
    delta = available_space(state, cluster)
    incoming = sum(r * v for r, v in zip(arrivals, volumes))
    overflow = incoming > delta
    weights = overflow_weights(delta, arrivals, [it.cost_short for it in items], volumes)
    received = _received(delta, arrivals, weights, volumes) if overflow else list(arrivals)

    demands = [sample_demand(it.demand, rng.demand[i]) for i, it in enumerate(items)]
    costs, raws, rewards, flags = [], [], [], []
    for i, it in enumerate(items):
        net = state.levels[i] + received[i] - demands[i]
        new.levels[i] = net if net > 0 else 0
        short = -net if net < 0 else 0
        new.backlogs[i] = state.backlogs[i] + short
        flags.append(short > 0)
        w, raw = step_cost(acts[i], state.levels[i], new.backlogs[i], it, cluster.cost_weights)
        costs.append(w)
        raws.append(raw)
        rewards.append(-w)
    new.last_arrival = list(arrivals)
    new.t = t + 1
    outcome = StepOutcome(actions=acts, arrivals=arrivals, weights=weights, overflow=overflow,
                          space=delta, received=received, demands=demands, lead_times=leads,
                          costs=costs, raw_costs=raws, rewards=rewards,
                          cluster_reward=cluster_reward(rewards), shortage_flags=flags)
    return new, outcome


OBS_CLAMP = 4.0


def observation(state: InventoryState, cluster: ClusterSpec, item_index: int,
                include_space: bool = False) -> np.ndarray:
    """Normalized per-item features (level, arrival, lead-time, backlog).

    Quantities are divided by the cluster capacity; the last lead-time is
    multiplied by the fitted geometric rate so 1 means "an average delay".
    With ``include_space`` the free share of the cluster storage is appended.
    """
    if not 0 <= item_index < len(cluster):
        raise IndexError(f"item index {item_index} out of range")
    cap = float(cluster.capacity)
    p = cluster.items[item_index].lead.p
    feats = [
        state.levels[item_index] / cap,
        state.last_arrival[item_index] / cap,
        min(max(state.last_lead[item_index] * p, 0.0), OBS_CLAMP),
        min(state.backlogs[item_index] / cap, OBS_CLAMP),
    ]
    if include_space:
        feats.append(available_space(state, cluster) / cap)
    return np.array(feats, dtype=np.float64)


class InventoryEnv:
    """Stateful wrapper bundling a cluster, its state and its random streams."""

    def __init__(self, cluster: ClusterSpec):
        self.cluster = cluster
        self.state: Optional[InventoryState] = None
        self.streams: Optional[EnvStreams] = None

    def reset(self, *seed_key, initial=None) -> InventoryState:
        if not seed_key:
            seed_key = (0,)
        self.streams = EnvStreams(self.cluster, *seed_key)
        self.state = reset(self.cluster, initial=initial)
        return self.state

    def step(self, actions) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        self.state, outcome = step(self.state, self.cluster, actions, self.streams)
        return outcome

    def observe(self, item_index: int, include_space: bool = False) -> np.ndarray:
        return observation(self.state, self.cluster, item_index, include_space)


TRACE_FIELDS = ["t", "item_id", "action", "lead_time", "arrival", "weight", "level", "backlog",
                "cost_order", "cost_hold", "cost_short"]


class TraceWriter:
    """Streams one CSV row per item and period."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(TRACE_FIELDS)

    def write(self, t: int, cluster: ClusterSpec, state: InventoryState, outcome: StepOutcome):
        for i, it in enumerate(cluster.items):
            lead = outcome.lead_times[i]
            self._writer.writerow([
                t, it.id, outcome.actions[i], "" if lead is None else lead, outcome.arrivals[i],
                repr(outcome.weights[i]), state.levels[i], state.backlogs[i],
                *(repr(float(c)) for c in outcome.raw_costs[i]),
            ])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ClusterEnv:
    """Multi-agent training view of a cluster.

    Every agent gets the cluster-average reward (divided by ``reward_scale``)
    and its own normalized observation.  Episodes are cut at ``horizon``.
    """

    def __init__(self, cluster: ClusterSpec, horizon: int = 200, reward_scale: float = 1.0,
                 include_space: Optional[bool] = None):
        self.cluster = cluster
        self.horizon = int(horizon)
        self.reward_scale = float(reward_scale)
        self.include_space = cluster.shared if include_space is None else include_space
        self.n_agents = len(cluster)
        self.obs_dim = 5 if self.include_space else 4
        self.action_high = cluster.capacity
        self._env = InventoryEnv(cluster)

    @property
    def state(self):
        return self._env.state

    def _obs(self):
        return np.stack([self._env.observe(i, self.include_space) for i in range(self.n_agents)])

    def reset(self, *seed_key):
        self._env.reset(*seed_key)
        return self._obs()

    def step(self, actions):
        outcome = self._env.step([int(a) for a in actions])
        r = outcome.cluster_reward / self.reward_scale
        done = self._env.state.t >= self.horizon
        info = {"outcome": outcome, "truncated": done}
        return self._obs(), np.full(self.n_agents, r), done, info


class ItemEnv:
    """Single-agent view of a one-item cluster."""

    def __init__(self, cluster: ClusterSpec, horizon: int = 200, reward_scale: float = 1.0):
        if len(cluster) != 1:
            raise ConfigError("ItemEnv needs a single-item cluster")
        self._inner = ClusterEnv(cluster, horizon, reward_scale, include_space=False)
        self.cluster = cluster
        self.obs_dim = self._inner.obs_dim
        self.action_high = self._inner.action_high
        self.horizon = self._inner.horizon
        self.reward_scale = self._inner.reward_scale

    def reset(self, *seed_key):
        return self._inner.reset(*seed_key)[0]

    def step(self, action):
        obs, r, done, info = self._inner.step([action])
        return obs[0], float(r[0]), done, info


def default_reward_scale(cluster: ClusterSpec) -> float:
    """Typical per-period money at stake: mean of shortage cost times mean demand."""
    vals = [it.cost_short * it.demand.mean for it in cluster.items]
    scale = sum(vals) / len(vals)
    return scale if scale > 0 else 1.0
