"""Advantage estimation and the clipped actor-critic objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from invrl.ppo.distributions import distribution


class TrainingDivergence(RuntimeError):
    """Raised when a loss or parameter vector stops being finite."""

    def __init__(self, message, agent=None, last_good=None):
        super().__init__(message)
        self.agent = agent
        self.last_good = last_good


@dataclass
class Trajectory:
    """One episode (or fragment) of a single agent.

    ``bootstrap_value`` is V(s_T) for a fragment cut by the time limit and 0
    for a true terminal state.
    """

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    dist_inputs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    bootstrap_value: float = 0.0

    def __len__(self):
        return len(self.rewards)


def discounted_returns(rewards, gamma, bootstrap=0.0):
    out = np.empty(len(rewards))
    g = bootstrap
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        out[t] = g
    return out


def compute_gae(traj: Trajectory, gamma: float, lam: float, use_gae: bool = True):
    """Returns ``(advantages, value_targets)`` for one trajectory."""
    r = np.asarray(traj.rewards, dtype=np.float64)
    v = np.asarray(traj.values, dtype=np.float64)
    if not use_gae:
        ret = discounted_returns(r, gamma, traj.bootstrap_value)
        return ret - v, ret
    v_next = np.append(v[1:], traj.bootstrap_value)
    deltas = r + gamma * v_next - v
    adv = discounted_returns(deltas, gamma * lam)
    return adv, adv + v


@dataclass
class LossSettings:
    clip_eps: float = 0.3
    vf_clip: float = 10.0
    vf_loss_coeff: float = 1.0
    kl_coeff: float = 0.2
    entropy_coeff: float = 0.01
    grad_clip: float = None
    use_critic: bool = True


def _upstream(net, params, batch, eps, vf_clip):
    """Component values and their gradients w.r.t. (head outputs, values)."""
    dist = distribution(net.arch.head)
    z, v, cache = net.forward(params, batch["obs"])
    n = len(z)
    adv = batch["advantages"]
    logp = dist.logp(z, batch["actions"])
    ratio = np.exp(logp - batch["logp_old"])
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    use1 = surr1 <= surr2
    actor = np.where(use1, surr1, surr2).mean()
    g_logp = np.where(use1, ratio * adv, 0.0) / n
    g_actor = dist.dlogp(z, batch["actions"]) * g_logp[:, None]

    v_old, target = batch["values_old"], batch["value_targets"]
    err1 = (v - target) ** 2
    dv = np.clip(v - v_old, -vf_clip, vf_clip)
    err2 = (v_old + dv - target) ** 2
    pick1 = err1 >= err2
    critic = np.maximum(err1, err2).mean()
    inside = np.abs(v - v_old) < vf_clip
    g_critic = np.where(pick1, 2.0 * (v - target),
                        np.where(inside, 2.0 * (v_old + dv - target), 0.0)) / n

    kl = dist.kl(batch["dist_old"], z)
    g_kl = dist.dkl(batch["dist_old"], z) / n
    ent = dist.entropy(z)
    g_ent = dist.dentropy(z) / n
    comps = {
        "actor": (actor, g_actor, None),
        "critic": (critic, None, g_critic),
        "kl": (kl.mean(), g_kl, None),
        "entropy": (ent.mean(), g_ent, None),
    }
    return comps, cache, z, v


def loss_components(net, params, batch, settings: LossSettings) -> dict:
    """Each objective component with its own exact parameter gradient.

    Components are the clipped surrogate, the clipped critic error, the mean
    KL(old || new) and the mean entropy; gradients are of the component as
    stated (no sign flips or coefficients).
    """
    comps, cache, z, v = _upstream(net, params, batch, settings.clip_eps, settings.vf_clip)
    out = {}
    zeros_z, zeros_v = np.zeros_like(z), np.zeros_like(v)
    for name, (val, gz, gv) in comps.items():
        grad = net.backward(cache, zeros_z if gz is None else gz, zeros_v if gv is None else gv)
        out[name] = (float(val), grad)
    return out


def clip_by_norm(grad, max_norm):
    norm = float(np.sqrt(grad @ grad))
    if max_norm is not None and norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


def ppo_loss(net, params, batch, settings: LossSettings):
    """Scalar loss to minimize and its (norm-clipped) gradient.

    The loss is the negated objective
    ``actor - c1 * critic - c2 * kl + c3 * entropy``.
    """
    comps, cache, z, v = _upstream(net, params, batch, settings.clip_eps, settings.vf_clip)
    c1 = settings.vf_loss_coeff if settings.use_critic else 0.0
    c2, c3 = settings.kl_coeff, settings.entropy_coeff
    actor, g_actor, _ = comps["actor"]
    critic, _, g_critic = comps["critic"]
    kl, g_kl, _ = comps["kl"]
    ent, g_ent, _ = comps["entropy"]
    objective = actor - c1 * critic - c2 * kl + c3 * ent
    loss = -objective
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite loss (actor={actor}, critic={critic}, kl={kl})")
    gz = -(g_actor - c2 * g_kl + c3 * g_ent)
    gv = c1 * g_critic
    grad = net.backward(cache, gz, gv)
    grad, norm = clip_by_norm(grad, settings.grad_clip)
    stats = {"actor": actor, "critic": critic, "kl": kl, "entropy": ent, "grad_norm": norm}
    return float(loss), grad, stats
