"""Independent PPO over the items of one cluster.

Every item is an agent with its own actor-critic and optimizer state.  All
agents receive the cluster-average reward, and each one updates only from its
own trajectory.  Training curves are reported as average reward per period
divided by the magnitude of the MinMax baseline's, so the MinMax line sits
at -1 and higher is better.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from invrl.baselines import baseline_controller
from invrl.env import ClusterEnv, ClusterSpec, ConfigError, InventoryEnv, default_reward_scale
from invrl.ppo.config import PpoConfig
from invrl.ppo.distributions import distribution
from invrl.ppo.losses import Trajectory
from invrl.ppo.network import Architecture, Network
from invrl.ppo.optim import AdamState
from invrl.ppo.trainer import ActionMap, PolicyController, train_agents


@dataclass
class AgentSet:
    """Per-item networks for one cluster.  With ``share_policy`` a single
    parameter vector serves every agent."""

    arch: Architecture
    action_map: ActionMap
    params: list
    config: PpoConfig
    adam: list = field(default_factory=list)

    def __len__(self):
        return len(self.params)

    def agent_params(self, i: int):
        return self.params[0 if self.config.share_policy else i]

    def controller(self, cluster: ClusterSpec, deterministic: bool = True) -> PolicyController:
        return PolicyController(self.arch, self.params, self.action_map, cluster,
                                include_space=self.arch.obs_dim == 5,
                                deterministic=deterministic,
                                share_policy=self.config.share_policy)


@dataclass
class JointTrajectory:
    agents: list            # one Trajectory per agent
    rewards: np.ndarray     # shared cluster reward per step


def joint_rollout(env: ClusterEnv, agents: AgentSet, steps: int, rng: np.random.Generator,
                  *seed_key) -> JointTrajectory:
    """Roll one environment for ``steps`` periods with stochastic actions."""
    if env.n_agents != len(agents.params) and not agents.config.share_policy:
        raise ConfigError(f"cluster has {env.n_agents} items but {len(agents)} agents")
    net = Network(agents.arch)
    dist = distribution(agents.arch.head)
    obs = env.reset(*(seed_key or (0,)))
    n = env.n_agents
    rec = [{"obs": [], "act": [], "logp": [], "dist": [], "val": [], "rew": []} for _ in range(n)]
    shared = []
    done = False
    for _ in range(steps):
        joint = []
        for i in range(n):
            z, v, _ = net.forward(agents.agent_params(i), obs[i:i + 1])
            noise = rng.random(1) if agents.arch.head == "discrete" else rng.standard_normal(1)
            raw = dist.sample(z, noise)
            r = rec[i]
            r["obs"].append(obs[i])
            r["act"].append(raw[0])
            r["logp"].append(dist.logp(z, raw)[0])
            r["dist"].append(z[0])
            r["val"].append(v[0])
            joint.append(int(agents.action_map.to_env(raw)[0]))
        obs, rew, done, _ = env.step(joint)
        for i in range(n):
            rec[i]["rew"].append(float(rew[i]))
        shared.append(float(rew[0]))
        if done:
            break
    # Cluster episodes only end at the time limit, so the cut is always bootstrapped.
    trajs = []
    for i, r in enumerate(rec):
        boot = float(net.values(agents.agent_params(i), obs[i:i + 1])[0])
        trajs.append(Trajectory(np.array(r["obs"]), np.array(r["act"]), np.array(r["logp"]),
                                np.array(r["dist"]), np.array(r["val"]), np.array(r["rew"]), boot))
    return JointTrajectory(trajs, np.array(shared))


def baseline_reward_lines(cluster: ClusterSpec, policies=("minmax", "oracle"),
                          replications: int = 20, seed: int = 0, horizon: int = 200,
                          normalizer: Optional[float] = None, **kwargs) -> dict:
    """Mean cluster reward per period of each baseline, normalized like the
    training curves.

    Returns ``{name: normalized}`` plus ``"_normalizer"``, the magnitude of the
    MinMax per-period reward (1 when it is zero).
    """
    raw = {}
    for name in dict.fromkeys(list(policies) + ["minmax"]):
        ctrl = baseline_controller(name, cluster, **kwargs) if isinstance(name, str) else name
        totals = []
        for r in range(replications):
            env = InventoryEnv(cluster)
            state = env.reset(seed, r)
            ctrl.reset(seed, r)
            acc = 0.0
            for _ in range(horizon):
                acc += env.step(ctrl.act(state)).cluster_reward
                state = env.state
            totals.append(acc / horizon)
        raw[name] = float(np.mean(totals))
    if normalizer is None:
        normalizer = abs(raw["minmax"]) or 1.0
    out = {name: raw[name] / normalizer for name in policies}
    out["_normalizer"] = normalizer
    return out


def ippo_train(cluster: ClusterSpec, cfg: PpoConfig, seed: int, total_timesteps: int,
               include_space: Optional[bool] = None, normalizer: Optional[float] = None,
               baseline_reps: int = 20, callback: Optional[Callable] = None):
    """Train one PPO learner per item.  Returns ``(AgentSet, curve, result)``.

    Curve rows carry the raw per-period reward and ``normalized_reward``,
    divided by ``normalizer`` (by default the MinMax magnitude).
    """
    if normalizer is None:
        normalizer = baseline_reward_lines(cluster, ("minmax",), baseline_reps, seed,
                                           cfg.horizon)["_normalizer"]
    scale = cfg.reward_scale or default_reward_scale(cluster)

    def make_env():
        return ClusterEnv(cluster, horizon=cfg.horizon, reward_scale=scale,
                          include_space=include_space)

    def wrapped(row, result):
        row["reward_per_step"] = row["mean_reward"] / cfg.horizon
        row["normalized_reward"] = row["reward_per_step"] / normalizer
        return callback(row, result) if callback is not None else None

    result = train_agents(make_env, cfg, seed, total_timesteps, wrapped)
    agents = AgentSet(result.arch, result.action_map, result.params, cfg)
    return agents, result.curve, result
