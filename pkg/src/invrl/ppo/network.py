"""Two-hidden-layer actor-critic network over a flat parameter vector.

The policy trunk feeds either a logits head (discrete actions) or a
(mean, raw std) head (Gaussian actions).  The value head either sits on its
own trunk or shares the policy trunk.  Forward and backward passes are
written out by hand so every gradient can be checked against finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Architecture:
    obs_dim: int
    hidden: tuple = (64, 64)
    head: str = "gaussian"
    n_actions: int = 0
    share_layers: bool = False
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.head not in ("discrete", "gaussian"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "discrete" and self.n_actions < 2:
            raise ValueError("a discrete head needs at least two actions")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.hidden:
            raise ValueError("at least one hidden layer is required")

    @property
    def out_dim(self) -> int:
        return self.n_actions if self.head == "discrete" else 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**{**d, "hidden": tuple(d["hidden"])})


class Network:
    """Shape bookkeeping plus forward/backward for one ``Architecture``."""

    def __init__(self, arch: Architecture):
        self.arch = arch
        sizes = (arch.obs_dim,) + arch.hidden
        self.layout = []
        for k in range(len(arch.hidden)):
            self.layout.append((f"pi{k}", (sizes[k], sizes[k + 1])))
        self.layout.append(("pi_out", (sizes[-1], arch.out_dim)))
        if not arch.share_layers:
            for k in range(len(arch.hidden)):
                self.layout.append((f"vf{k}", (sizes[k], sizes[k + 1])))
        self.layout.append(("vf_out", (sizes[-1], 1)))
        self._slices = {}
        offset = 0
        for name, (fan_in, fan_out) in self.layout:
            w = fan_in * fan_out
            self._slices[name] = (offset, offset + w, offset + w + fan_out, (fan_in, fan_out))
            offset += w + fan_out
        self.size = offset

    def unpack(self, params):
        if params.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {params.shape}")
        out = {}
        for name, (a, b, c, shape) in self._slices.items():
            out[name] = (params[a:b].reshape(shape), params[b:c])
        return out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        params = np.zeros(self.size)
        for name, (a, b, c, shape) in self._slices.items():
            if name == "pi_out":
                gain = 0.01
            elif name == "vf_out":
                gain = 1.0
            else:
                gain = math.sqrt(2.0)
            params[a:b] = (gain * _orthogonal(shape, rng)).ravel()
        return params

    def _act(self, z):
        if self.arch.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_grad(self, z, h):
        if self.arch.activation == "relu":
            return (z > 0.0).astype(z.dtype)
        return 1.0 - h * h

    def _trunk(self, p, prefix, x):
        zs, hs = [], [x]
        h = x
        for k in range(len(self.arch.hidden)):
            w, b = p[f"{prefix}{k}"]
            z = h @ w + b
            h = self._act(z)
            zs.append(z)
            hs.append(h)
        return zs, hs

    def forward(self, params, obs):
        """Returns ``(dist_inputs, values, cache)`` for a batch of observations."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[1] != self.arch.obs_dim:
            raise ValueError(f"expected observations of width {self.arch.obs_dim}, got {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise ValueError("non-finite observation")
        p = self.unpack(params)
        pz, ph = self._trunk(p, "pi", obs)
        w, b = p["pi_out"]
        dist = ph[-1] @ w + b
        if self.arch.share_layers:
            vz, vh = pz, ph
        else:
            vz, vh = self._trunk(p, "vf", obs)
        w, b = p["vf_out"]
        values = (vh[-1] @ w + b)[:, 0]
        return dist, values, (p, pz, ph, vz, vh)

    def values(self, params, obs):
        return self.forward(params, obs)[1]

    def backward(self, cache, g_dist, g_values) -> np.ndarray:
        """Gradient w.r.t. the flat parameters given upstream gradients."""
        p, pz, ph, vz, vh = cache
        grads = {}
        w, _ = p["pi_out"]
        grads["pi_out"] = (ph[-1].T @ g_dist, g_dist.sum(axis=0))
        g_pi_h = g_dist @ w.T
        gv = g_values[:, None]
        w, _ = p["vf_out"]
        grads["vf_out"] = (vh[-1].T @ gv, gv.sum(axis=0))
        g_vf_h = gv @ w.T
        if self.arch.share_layers:
            self._trunk_back(p, "pi", pz, ph, g_pi_h + g_vf_h, grads)
        else:
            self._trunk_back(p, "pi", pz, ph, g_pi_h, grads)
            self._trunk_back(p, "vf", vz, vh, g_vf_h, grads)
        flat = np.empty(self.size)
        for name, (a, b, c, _) in self._slices.items():
            gw, gb = grads[name]
            flat[a:b] = gw.ravel()
            flat[b:c] = gb
        return flat

    def _trunk_back(self, p, prefix, zs, hs, g, grads):
        for k in reversed(range(len(self.arch.hidden))):
            gz = g * self._act_grad(zs[k], hs[k + 1])
            w, _ = p[f"{prefix}{k}"]
            grads[f"{prefix}{k}"] = (hs[k].T @ gz, gz.sum(axis=0))
            if k:
                g = gz @ w.T


def _orthogonal(shape, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T
