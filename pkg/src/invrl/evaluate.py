"""Seeded replication protocol: cumulative cost and shortage reports.

Each replication builds a fresh environment per cluster, drives it for
``horizon`` periods with a controller and accumulates raw (unweighted)
order, holding and shortage money plus shortage counts.  Results are
reduced in replication order, so reports do not depend on the number of
worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from invrl.catalog import ItemCatalog, load_catalog
from invrl.env import ClusterSpec, ConfigError, CostWeights, InventoryEnv, TraceWriter

REPORT_FIELDS = ["scope", "id", "policy", "mean_cost", "std_cost", "mean_shortages",
                 "std_shortages", "reps", "horizon", "seed"]


@dataclass
class ClusterConfig:
    items: list
    capacity: Optional[int] = None
    initial_levels: Optional[list] = None

    def __post_init__(self):
        self.items = [int(i) for i in self.items]
        if not self.items:
            raise ConfigError("a cluster needs at least one item")
        if len(set(self.items)) != len(self.items):
            raise ConfigError(f"duplicate item ids in cluster {self.items}")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one evaluation run.

    ``clusters`` lists groups of item ids sharing storage; an item evaluated on
    its own is a one-item cluster.
    """

    clusters: list
    policy: str = "minmax"
    preset: Optional[str] = None
    horizon: int = 240
    replications: int = 100
    seed: int = 0
    cost_weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    alpha: float = 0.90
    minmax_mode: str = "up_to"
    shortage_unit: str = "events"
    catalog: Optional[str] = None
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.clusters = [c if isinstance(c, ClusterConfig) else ClusterConfig(**c)
                         if isinstance(c, dict) else ClusterConfig(list(c)) for c in self.clusters]
        self.cost_weights = tuple(float(w) for w in self.cost_weights)
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.replications <= 0:
            raise ConfigError("replications must be positive")
        if self.shortage_unit not in ("events", "units"):
            raise ConfigError(f"shortage_unit must be 'events' or 'units', got {self.shortage_unit!r}")
        CostWeights(*self.cost_weights)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cost_weights"] = list(self.cost_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment field(s): {sorted(unknown)}")
        if "clusters" not in d:
            raise ConfigError("experiment config needs 'clusters'")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_clusters(self, catalog: Optional[ItemCatalog] = None) -> list:
        if catalog is None:
            catalog = load_catalog(self.catalog)
        weights = CostWeights(*self.cost_weights)
        out = []
        for c in self.clusters:
            missing = [i for i in c.items if i not in catalog]
            if missing:
                raise ConfigError(f"item id(s) {missing} not in catalog")
            items = [catalog[i].to_item() for i in c.items]
            out.append(ClusterSpec.from_items(items, capacity=c.capacity, cost_weights=weights,
                                              initial_levels=c.initial_levels))
        return out


@dataclass
class EpisodeResult:
    costs: np.ndarray           # raw money per item
    weighted: np.ndarray        # weighted cost per item
    shortages: np.ndarray       # events or units per item


def run_episode(cluster: ClusterSpec, controller, horizon: int, seed_key: tuple,
                units: bool = False, trace: Optional[TraceWriter] = None) -> EpisodeResult:
    n = len(cluster)
    env = InventoryEnv(cluster)
    state = env.reset(*seed_key)
    controller.reset(*seed_key)
    costs = np.zeros(n)
    weighted = np.zeros(n)
    short = np.zeros(n)
    for _ in range(horizon):
        actions = controller.act(state)
        if len(actions) != n:
            raise ConfigError(f"controller produced {len(actions)} actions for {n} items")
        t = state.t
        before = list(state.backlogs)
        outcome = env.step(actions)
        state = env.state
        if trace is not None:
            trace.write(t, cluster, state, outcome)
        for i in range(n):
            costs[i] += math.fsum(outcome.raw_costs[i])
            weighted[i] += outcome.costs[i]
            if units:
                short[i] += state.backlogs[i] - before[i]
            elif outcome.shortage_flags[i]:
                short[i] += 1
    return EpisodeResult(costs, weighted, short)


def _replication(args):
    cluster, controller, horizon, key, units = args
    return run_episode(cluster, controller, horizon, key, units)


@dataclass
class ReportRow:
    scope: str
    id: str
    policy: str
    mean_cost: float
    std_cost: float
    mean_shortages: float
    std_shortages: float
    reps: int
    horizon: int
    seed: int
    mean_weighted_cost: float = 0.0


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def item_rows(self):
        return [r for r in self.rows if r.scope == "item"]

    def cluster_rows(self):
        return [r for r in self.rows if r.scope == "cluster"]

    def row(self, item_id) -> ReportRow:
        for r in self.item_rows():
            if r.id == str(item_id):
                return r
        raise KeyError(item_id)


def evaluate(config: ExperimentConfig, policy_factory: Callable, threads: int = 1,
             catalog: Optional[ItemCatalog] = None, trace_path=None,
             policy_name: Optional[str] = None) -> EvalReport:
    """Run the replication protocol.

    ``policy_factory(cluster, index)`` returns a controller with
    ``reset(*seed_key)`` and ``act(state)``.  With ``trace_path`` the first
    replication of the first cluster is written out period by period.
    """
    clusters = config.build_clusters(catalog)
    units = config.shortage_unit == "units"
    name = policy_name or config.policy
    report = EvalReport(meta={"seed": config.seed, "config_hash": config.digest(),
                              "policy": name, "shortage_unit": config.shortage_unit})
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k, cluster in enumerate(clusters):
            controller = policy_factory(cluster, k)
            keys = [(config.seed, r) for r in range(config.replications)]
            results = []
            start = 0
            if trace_path is not None and k == 0:
                with TraceWriter(trace_path) as tw:
                    results.append(run_episode(cluster, controller, config.horizon, keys[0],
                                               units, tw))
                start = 1
            jobs = [(cluster, controller, config.horizon, key, units) for key in keys[start:]]
            if pool is not None:
                results.extend(pool.map(_replication, jobs))
            else:
                results.extend(_replication(j) for j in jobs)
            _reduce(report, cluster, results, name, config)
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def _reduce(report, cluster, results, name, config):
    costs = np.array([r.costs for r in results])          # reps x items
    weighted = np.array([r.weighted for r in results])
    short = np.array([r.shortages for r in results])
    reps = len(results)
    common = dict(policy=name, reps=reps, horizon=config.horizon, seed=config.seed)
    for i, item_id in enumerate(cluster.ids):
        report.rows.append(ReportRow(
            "item", str(item_id), mean_cost=float(costs[:, i].mean()),
            std_cost=float(costs[:, i].std()), mean_shortages=float(short[:, i].mean()),
            std_shortages=float(short[:, i].std()),
            mean_weighted_cost=float(weighted[:, i].mean()), **common))
    per_rep_cost = costs.mean(axis=1)
    per_rep_short = short.mean(axis=1)
    report.rows.append(ReportRow(
        "cluster", "+".join(str(i) for i in cluster.ids),
        mean_cost=float(np.mean([costs[:, i].mean() for i in range(len(cluster))])),
        std_cost=float(per_rep_cost.std()), mean_shortages=float(per_rep_short.mean()),
        std_shortages=float(per_rep_short.std()),
        mean_weighted_cost=float(weighted.mean(axis=1).mean()), **common))


def export_report(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for r in report.rows:
            w.writerow([r.scope, r.id, r.policy, repr(r.mean_cost), repr(r.std_cost),
                        repr(r.mean_shortages), repr(r.std_shortages), r.reps, r.horizon, r.seed])


def read_report(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
