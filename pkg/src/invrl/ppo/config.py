"""PPO hyper-parameters and the published training presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from invrl.ppo.losses import LossSettings


@dataclass(frozen=True)
class PpoConfig:
    head: str = "gaussian"
    hidden: tuple = (64, 64)
    activation: str = "relu"
    vf_share_layers: bool = False
    gamma: float = 0.99
    gae_lambda: float = 1.0
    use_gae: bool = True
    use_critic: bool = True
    clip_eps: float = 0.3
    vf_clip: float = 1e3
    vf_loss_coeff: float = 1.0
    kl_coeff: float = 0.2
    kl_target: float = 0.01
    entropy_coeff: float = 0.01
    lr: float = 1e-4
    horizon: int = 200
    rollout_fragment_length: int = 200
    train_batch_size: int = 8000
    sgd_minibatch_size: int = 250
    num_sgd_iter: int = 20
    grad_clip: Optional[float] = 40.0
    num_workers: int = 40
    normalize_advantages: bool = True
    normalize_actions: bool = True
    adaptive_kl: bool = True
    reward_scale: Optional[float] = None
    action_stride: Optional[int] = None
    share_policy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be positive")
        if self.head not in ("discrete", "gaussian"):
            raise ValueError(f"unknown head {self.head!r}")
        for name in ("horizon", "train_batch_size", "sgd_minibatch_size", "num_sgd_iter",
                     "num_workers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def loss_settings(self, kl_coeff: Optional[float] = None) -> LossSettings:
        return LossSettings(clip_eps=self.clip_eps, vf_clip=self.vf_clip,
                            vf_loss_coeff=self.vf_loss_coeff,
                            kl_coeff=self.kl_coeff if kl_coeff is None else kl_coeff,
                            entropy_coeff=self.entropy_coeff, grad_clip=self.grad_clip,
                            use_critic=self.use_critic)

    def replace(self, **changes) -> "PpoConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PpoConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown PPO config field(s): {sorted(unknown)}")
        return cls(**d)


# Settings shared by every published run.
_COMMON = dict(horizon=200, gamma=0.99, lr=1e-4, vf_share_layers=False,
               rollout_fragment_length=200, train_batch_size=8000, sgd_minibatch_size=250,
               num_sgd_iter=20, normalize_actions=True, activation="relu", use_critic=True,
               gae_lambda=1.0, kl_coeff=0.2, kl_target=0.01, entropy_coeff=0.01, clip_eps=0.3)

PRESETS = {
    "ppo_d": dict(_COMMON, head="discrete", hidden=(512, 512), grad_clip=40.0, lr=1e-4,
                  vf_share_layers=False, use_gae=True, vf_clip=1e3, vf_loss_coeff=1.0),
    "ppo_d2": dict(_COMMON, head="discrete", hidden=(512, 512), grad_clip=40.0, lr=1e-4,
                   vf_share_layers=False, use_gae=True, vf_clip=1e4, vf_loss_coeff=1e-2),
    "ppo_c": dict(_COMMON, head="gaussian", hidden=(512, 512), grad_clip=40.0, lr=1e-4,
                  vf_share_layers=False, use_gae=True, vf_clip=1e3, vf_loss_coeff=1e-2),
    "ppo_c2": dict(_COMMON, head="gaussian", hidden=(512, 512), grad_clip=40.0, lr=2e-4,
                   vf_share_layers=False, use_gae=True, vf_clip=5e2, vf_loss_coeff=1e-2),
    "ippo_n1": dict(_COMMON, head="gaussian", hidden=(512, 256), grad_clip=40.0, lr=5e-5,
                    vf_share_layers=True, use_gae=False, vf_clip=5e2, vf_loss_coeff=1e-3),
    "ippo_n2": dict(_COMMON, head="gaussian", hidden=(512, 256), grad_clip=20.0, lr=2e-5,
                    vf_share_layers=True, use_gae=False, vf_clip=5e2, vf_loss_coeff=1e-4),
    "ippo_n3": dict(_COMMON, head="gaussian", hidden=(512, 256), grad_clip=20.0, lr=2e-5,
                    vf_share_layers=True, use_gae=False, vf_clip=5e2, vf_loss_coeff=1e-4),
}

DESK_HIDDEN = (64, 64)


def preset(name: str, scale: str = "full", **overrides) -> PpoConfig:
    """A published preset at its published width (``"full"``), or with small
    hidden layers when ``scale="desk"``."""
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if scale == "desk":
        base["hidden"] = DESK_HIDDEN
    elif scale != "full":
        raise ValueError(f"unknown scale {scale!r}")
    base.update(overrides)
    return PpoConfig(**base)


def load_config(path) -> PpoConfig:
    with open(path) as fh:
        data = json.load(fh)
    if "preset" in data:
        name = data.pop("preset")
        scale = data.pop("scale", "full")
        return preset(name, scale, **data)
    return PpoConfig.from_dict(data)


def presets_json() -> dict:
    return {k: {**v, "hidden": list(v["hidden"])} for k, v in PRESETS.items()}
