"""Action distributions parameterized by the network's head outputs.

Each class works on a batch of head outputs and exposes log-probabilities,
entropy and KL(old || new), each paired with its derivative w.r.t. the new
head outputs so the loss can be backpropagated by hand.
"""

from __future__ import annotations

import math

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MIN_STD = 1e-3


def log_softmax(z):
    m = z.max(axis=1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


class Categorical:
    """Gibbs (softmax) policy over ``n`` order buckets."""

    @staticmethod
    def probs(z):
        return np.exp(log_softmax(z))

    @staticmethod
    def logp(z, actions):
        lp = log_softmax(z)
        return lp[np.arange(len(z)), actions.astype(np.int64)]

    @staticmethod
    def dlogp(z, actions):
        g = -np.exp(log_softmax(z))
        g[np.arange(len(z)), actions.astype(np.int64)] += 1.0
        return g

    @staticmethod
    def entropy(z):
        lp = log_softmax(z)
        return -(np.exp(lp) * lp).sum(axis=1)

    @staticmethod
    def dentropy(z):
        lp = log_softmax(z)
        p = np.exp(lp)
        h = -(p * lp).sum(axis=1, keepdims=True)
        return -p * (lp + h)

    @staticmethod
    def kl(z_old, z_new):
        lo, ln = log_softmax(z_old), log_softmax(z_new)
        return (np.exp(lo) * (lo - ln)).sum(axis=1)

    @staticmethod
    def dkl(z_old, z_new):
        return np.exp(log_softmax(z_new)) - np.exp(log_softmax(z_old))

    @staticmethod
    def sample(z, u):
        """Inverse-CDF draw given uniforms ``u`` (one per row)."""
        cdf = np.cumsum(Categorical.probs(z), axis=1)
        idx = (cdf < u[:, None] * cdf[:, -1:]).sum(axis=1)
        return np.minimum(idx, z.shape[1] - 1)

    @staticmethod
    def mode(z):
        return z.argmax(axis=1)


def _softplus(s):
    return np.logaddexp(0.0, s)


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


class DiagGaussian:
    """Scalar normal policy; head outputs are (mean, raw std)."""

    @staticmethod
    def mean_std(z):
        return z[:, 0], _softplus(z[:, 1]) + MIN_STD

    @staticmethod
    def logp(z, actions):
        m, sd = DiagGaussian.mean_std(z)
        return -0.5 * ((actions - m) / sd) ** 2 - np.log(sd) - LOG_SQRT_2PI

    @staticmethod
    def dlogp(z, actions):
        m, sd = DiagGaussian.mean_std(z)
        d = actions - m
        g = np.empty_like(z)
        g[:, 0] = d / sd ** 2
        g[:, 1] = (d ** 2 / sd ** 3 - 1.0 / sd) * _sigmoid(z[:, 1])
        return g

    @staticmethod
    def entropy(z):
        _, sd = DiagGaussian.mean_std(z)
        return np.log(sd) + 0.5 + LOG_SQRT_2PI

    @staticmethod
    def dentropy(z):
        _, sd = DiagGaussian.mean_std(z)
        g = np.zeros_like(z)
        g[:, 1] = _sigmoid(z[:, 1]) / sd
        return g

    @staticmethod
    def kl(z_old, z_new):
        mo, so = DiagGaussian.mean_std(z_old)
        mn, sn = DiagGaussian.mean_std(z_new)
        return np.log(sn / so) + (so ** 2 + (mo - mn) ** 2) / (2.0 * sn ** 2) - 0.5

    @staticmethod
    def dkl(z_old, z_new):
        mo, so = DiagGaussian.mean_std(z_old)
        mn, sn = DiagGaussian.mean_std(z_new)
        g = np.empty_like(z_new)
        g[:, 0] = (mn - mo) / sn ** 2
        g[:, 1] = (1.0 / sn - (so ** 2 + (mo - mn) ** 2) / sn ** 3) * _sigmoid(z_new[:, 1])
        return g

    @staticmethod
    def sample(z, eps):
        m, sd = DiagGaussian.mean_std(z)
        return m + sd * eps

    @staticmethod
    def mode(z):
        return z[:, 0].copy()


def distribution(head: str):
    return Categorical if head == "discrete" else DiagGaussian
