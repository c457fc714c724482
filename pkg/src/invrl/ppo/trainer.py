"""Rollout collection and the PPO optimization loop.

The loop is written for a set of agents acting in one environment; a
single-agent environment is just the one-agent case.  Environments follow a
small gym-like protocol:

* ``n_agents``, ``obs_dim`` and ``action_high`` attributes (orders are
  integers in ``0..action_high``);
* ``reset(*seed_key) -> obs`` with shape ``(n_agents, obs_dim)``;
* ``step(actions) -> (obs, rewards, done, info)`` where ``rewards`` has one
  entry per agent and ``info["truncated"]`` marks a time-limit cut.

Workers are independent environment copies stepped in lockstep so policy
evaluation can be batched across them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from invrl.ppo.config import PpoConfig
from invrl.ppo.distributions import distribution
from invrl.ppo.losses import Trajectory, TrainingDivergence, compute_gae, ppo_loss
from invrl.ppo.network import Architecture, Network
from invrl.ppo.optim import AdamState, adam_step
from invrl.stochastic import ENV, INIT, POLICY, SHUFFLE, RngStream

CHECKPOINT_FORMAT = "invrl-checkpoint"
CHECKPOINT_VERSION = 1
CURVE_FIELDS = ["iteration", "timesteps", "mean_reward", "std_reward", "kl", "entropy"]


class ActionMap:
    """Translate raw policy outputs into integer order quantities."""

    def __init__(self, head: str, high: int, stride: Optional[int] = None,
                 normalize: bool = True):
        self.head = head
        self.high = int(high)
        self.normalize = normalize
        if stride is None:
            stride = 1 if self.high <= 256 else math.ceil(self.high / 256)
        self.stride = int(stride)
        self.n_actions = self.high // self.stride + 1 if head == "discrete" else 0
        if head == "discrete" and self.n_actions * self.stride <= self.high:
            # keep the top of the range reachable
            self.n_actions += 1

    def to_env(self, raw) -> np.ndarray:
        raw = np.asarray(raw)
        if self.head == "discrete":
            return np.minimum(raw.astype(np.int64) * self.stride, self.high)
        x = (raw + 1.0) * 0.5 * self.high if self.normalize else raw
        return np.floor(np.clip(x, 0.0, self.high) + 0.5).astype(np.int64)

    def to_dict(self):
        return {"head": self.head, "high": self.high, "stride": self.stride,
                "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d):
        return cls(d["head"], d["high"], d["stride"], d["normalize"])


class _SingleAsMulti:
    """Adapter presenting a single-agent env through the multi-agent protocol."""

    n_agents = 1

    def __init__(self, env):
        self.env = env
        self.obs_dim = env.obs_dim
        self.action_high = env.action_high
        self.reward_scale = getattr(env, "reward_scale", 1.0)

    def reset(self, *seed_key):
        return np.asarray(self.env.reset(*seed_key), dtype=np.float64)[None, :]

    def step(self, actions):
        obs, r, done, info = self.env.step(int(actions[0]))
        return np.asarray(obs, dtype=np.float64)[None, :], np.array([r], dtype=np.float64), done, info


@dataclass
class TrainResult:
    arch: Architecture
    action_map: ActionMap
    config: PpoConfig
    params: list
    curve: list = field(default_factory=list)
    agent_curves: list = field(default_factory=list)
    reward_scale: float = 1.0

    def agent_params(self, i: int):
        return self.params[0 if self.config.share_policy else i]


def _policy_of(cfg, i):
    return 0 if cfg.share_policy else i


def _collect(envs, net, amap, params, cfg, seed, iteration, policy_rngs):
    n_agents = envs[0].n_agents
    dist = distribution(net.arch.head)
    trajs = [[] for _ in range(n_agents)]
    returns = []
    steps = 0
    rnd = 0
    while steps < cfg.train_batch_size:
        W = len(envs)
        obs = np.stack([env.reset(seed, ENV, iteration, rnd, w) for w, env in enumerate(envs)])
        buf = [[{"obs": [], "act": [], "logp": [], "dist": [], "val": [], "rew": []}
                for _ in range(n_agents)] for _ in range(W)]
        ep_ret = np.zeros((W, n_agents))
        active = list(range(W))
        while active:
            idx = np.array(active)
            joint = np.zeros((len(active), n_agents), dtype=np.int64)
            for i in range(n_agents):
                o = obs[idx, i]
                z, v, _ = net.forward(params[_policy_of(cfg, i)], o)
                gen = policy_rngs[i].generator
                if net.arch.head == "discrete":
                    raw = dist.sample(z, gen.random(len(active)))
                else:
                    raw = dist.sample(z, gen.standard_normal(len(active)))
                lp = dist.logp(z, raw)
                joint[:, i] = amap.to_env(raw)
                for k, w in enumerate(active):
                    b = buf[w][i]
                    b["obs"].append(o[k])
                    b["act"].append(raw[k])
                    b["logp"].append(lp[k])
                    b["dist"].append(z[k])
                    b["val"].append(v[k])
            still = []
            for k, w in enumerate(active):
                nobs, rew, done, info = envs[w].step(joint[k])
                obs[w] = nobs
                for i in range(n_agents):
                    buf[w][i]["rew"].append(float(rew[i]))
                ep_ret[w] += rew
                steps += 1
                if done:
                    truncated = info.get("truncated", False) if isinstance(info, dict) else False
                    for i in range(n_agents):
                        boot = 0.0
                        if truncated:
                            boot = float(net.values(params[_policy_of(cfg, i)], nobs[i:i + 1])[0])
                        b = buf[w][i]
                        trajs[i].append(Trajectory(
                            obs=np.array(b["obs"]), actions=np.array(b["act"]),
                            logp=np.array(b["logp"]), dist_inputs=np.array(b["dist"]),
                            values=np.array(b["val"]), rewards=np.array(b["rew"]),
                            bootstrap_value=boot))
                    scale = getattr(envs[w], "reward_scale", 1.0)
                    returns.append(float(ep_ret[w].mean()) * scale)
                else:
                    still.append(w)
            active = still
        rnd += 1
    return trajs, returns, steps


def _batch(trajs, cfg):
    advs, targets = [], []
    for tr in trajs:
        a, t = compute_gae(tr, cfg.gamma, cfg.gae_lambda, cfg.use_gae)
        advs.append(a)
        targets.append(t)
    batch = {
        "obs": np.concatenate([t.obs for t in trajs]),
        "actions": np.concatenate([t.actions for t in trajs]),
        "logp_old": np.concatenate([t.logp for t in trajs]),
        "dist_old": np.concatenate([t.dist_inputs for t in trajs]),
        "values_old": np.concatenate([t.values for t in trajs]),
        "advantages": np.concatenate(advs),
        "value_targets": np.concatenate(targets),
    }
    if cfg.normalize_advantages:
        a = batch["advantages"]
        batch["advantages"] = (a - a.mean()) / max(a.std(), 1e-8)
    return batch


def _sgd(net, params, adam, batch, cfg, kl_coeff, rng, agent):
    n = len(batch["advantages"])
    mb = cfg.sgd_minibatch_size
    settings = cfg.loss_settings(kl_coeff)
    for _ in range(cfg.num_sgd_iter):
        perm = rng.generator.permutation(n)
        for start in range(0, n, mb):
            sel = perm[start:start + mb]
            minibatch = {k: v[sel] for k, v in batch.items()}
            try:
                _, grad, _ = ppo_loss(net, params, minibatch, settings)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"agent {agent}: {exc}", agent=agent,
                                         last_good=params.copy()) from None
            new = adam_step(params, grad, adam, cfg.lr)
            if not np.all(np.isfinite(new)):
                raise TrainingDivergence(f"agent {agent}: parameters became non-finite",
                                         agent=agent, last_good=params.copy())
            params = new
    return params


def train_agents(make_env: Callable, cfg: PpoConfig, seed: int, total_timesteps: int,
                 callback: Optional[Callable] = None) -> TrainResult:
    """Independent PPO for every agent of the env produced by ``make_env``.

    ``callback(row, result)`` runs after every iteration; returning True
    stops training early.
    """
    envs = [make_env() for _ in range(cfg.num_workers)]
    envs = [e if hasattr(e, "n_agents") else _SingleAsMulti(e) for e in envs]
    env0 = envs[0]
    n_agents = env0.n_agents
    amap = ActionMap(cfg.head, env0.action_high, cfg.action_stride, cfg.normalize_actions)
    arch = Architecture(env0.obs_dim, cfg.hidden, cfg.head, amap.n_actions, cfg.vf_share_layers,
                        cfg.activation)
    net = Network(arch)
    n_pol = 1 if cfg.share_policy else n_agents
    params = [net.init_params(RngStream(seed, INIT, k).generator) for k in range(n_pol)]
    adams = [AdamState.zeros(net.size) for _ in range(n_pol)]
    kl_coeffs = [cfg.kl_coeff] * n_pol
    policy_rngs = [RngStream(seed, POLICY, i) for i in range(n_agents)]
    shuffle_rngs = [RngStream(seed, SHUFFLE, k) for k in range(n_pol)]
    result = TrainResult(arch, amap, cfg, params, reward_scale=getattr(env0, "reward_scale", 1.0))
    result.agent_curves = [[] for _ in range(n_pol)]
    dist = distribution(arch.head)

    timesteps = 0
    iteration = 0
    while timesteps < total_timesteps:
        trajs, returns, steps = _collect(envs, net, amap, params, cfg, seed, iteration, policy_rngs)
        timesteps += steps
        kls, ents = [], []
        for k in range(n_pol):
            mine = [tr for i in range(n_agents) if _policy_of(cfg, i) == k for tr in trajs[i]]
            batch = _batch(mine, cfg)
            params[k] = _sgd(net, params[k], adams[k], batch, cfg, kl_coeffs[k], shuffle_rngs[k], k)
            z, _, _ = net.forward(params[k], batch["obs"])
            kl = float(dist.kl(batch["dist_old"], z).mean())
            ent = float(dist.entropy(z).mean())
            if cfg.adaptive_kl:
                if kl > 2.0 * cfg.kl_target:
                    kl_coeffs[k] *= 2.0
                elif kl < 0.5 * cfg.kl_target:
                    kl_coeffs[k] *= 0.5
            kls.append(kl)
            ents.append(ent)
            result.agent_curves[k].append({
                "iteration": iteration, "timesteps": timesteps,
                "mean_reward": float(np.mean(returns)), "std_reward": float(np.std(returns)),
                "kl": kl, "entropy": ent})
        row = {"iteration": iteration, "timesteps": timesteps,
               "mean_reward": float(np.mean(returns)), "std_reward": float(np.std(returns)),
               "kl": float(np.mean(kls)), "entropy": float(np.mean(ents))}
        result.curve.append(row)
        iteration += 1
        if callback is not None and callback(row, result):
            break
    result.params = params
    return result


def train_single(make_env: Callable, cfg: PpoConfig, seed: int, total_timesteps: int,
                 callback: Optional[Callable] = None):
    """Train one agent; returns ``(params, curve, result)``."""
    probe = make_env()
    if getattr(probe, "n_agents", 1) != 1:
        raise ValueError("train_single needs a single-agent environment")
    result = train_agents(make_env, cfg, seed, total_timesteps, callback)
    return result.params[0], result.curve, result


class PolicyController:
    """Drive a cluster with trained networks, one per item.

    With ``deterministic`` the controller plays the distribution mode (the
    mean order for Gaussian heads, the most likely bucket for Gibbs heads).
    """

    name = "ppo"

    def __init__(self, arch: Architecture, params: list, action_map: ActionMap, cluster,
                 include_space: Optional[bool] = None, deterministic: bool = True,
                 share_policy: bool = False):
        from invrl.env import observation
        self._observation = observation
        self.net = Network(arch)
        self.params = params
        self.amap = action_map
        self.cluster = cluster
        self.include_space = cluster.shared if include_space is None else include_space
        self.deterministic = deterministic
        self.share_policy = share_policy
        self._rng = None
        expect = arch.obs_dim
        got = 5 if self.include_space else 4
        if expect != got:
            raise ValueError(f"network expects {expect} features, cluster provides {got}")

    def reset(self, *seed_key):
        self._rng = RngStream(*(seed_key or (0,)), POLICY)

    def act(self, state) -> list:
        dist = distribution(self.net.arch.head)
        out = []
        for i in range(len(self.cluster)):
            o = self._observation(state, self.cluster, i, self.include_space)
            p = self.params[0 if self.share_policy else i]
            z, _, _ = self.net.forward(p, o[None, :])
            if self.deterministic:
                raw = dist.mode(z)
            elif self.net.arch.head == "discrete":
                raw = dist.sample(z, self._rng.generator.random(1))
            else:
                raw = dist.sample(z, self._rng.generator.standard_normal(1))
            out.append(int(self.amap.to_env(raw)[0]))
        return out


def save_checkpoint(path, arch: Architecture, params, action_map: ActionMap, extra=None):
    data = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "architecture": arch.to_dict(), "action_map": action_map.to_dict(),
            "params": [float(x) for x in params]}
    if extra:
        data["extra"] = extra
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {data.get('version')}")
    arch = Architecture.from_dict(data["architecture"])
    params = np.array(data["params"], dtype=np.float64)
    if params.shape != (Network(arch).size,):
        raise ValueError(f"{path}: parameter count does not match architecture")
    return arch, params, ActionMap.from_dict(data["action_map"]), data.get("extra", {})


def write_curve(path, rows):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for r in rows:
            w.writerow([r["iteration"], r["timesteps"]] +
                       [repr(float(r[k])) for k in CURVE_FIELDS[2:]])
