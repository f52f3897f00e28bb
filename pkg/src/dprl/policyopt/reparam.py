"""Pathwise actor updates: full-chain backpropagation and the one-step posterior-mean surrogate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.mixture import GaussianMixture

from ..genmodel import forward_perturb, posterior_mean, sample_times
from ..genmodel.score import _to_eps
from ..tensornet import autodiff as ad
from .common import apply_update


def bptt_loss(policy, critic, states, params, rng, explore_std=0.0):
    """-E[Q(s, a0_theta)] with every denoising step on the tape (sampler noise held fixed)."""
    if policy.sampler.num_steps > 50:
        raise ValueError("full-chain backpropagation is limited to at most 50 denoising steps")
    a0, _ = policy.sample(states, rng, params=params)
    if explore_std > 0:
        a0 = ad.clip(a0 + explore_std * rng.standard_normal(np.shape(ad.value(a0))),
                     policy.action_low, policy.action_high)
    return -ad.mean(critic.q(states, a0))


def reparam_bptt_update(policy, critic, states, optimizer, rng, entropy=None):
    """One gradient step through the whole sampling chain.

    ``entropy`` is an optional :class:`EntropyTuner`; its temperature scales the
    Gaussian exploration noise added to the chain's output.
    """
    std = 0.0 if entropy is None else entropy.noise_std
    seed = rng.integers(2**63)
    return apply_update(policy, lambda p: bptt_loss(policy, critic, states, p, np.random.default_rng(seed), std),
                        optimizer)


def gmm_entropy(samples, n_components=3, seed=0):
    """Monte Carlo entropy estimate -mean log p(x) under a fitted Gaussian mixture."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    k = max(1, min(n_components, len(x) // 10))
    gm = GaussianMixture(k, covariance_type="full", reg_covar=1e-6, random_state=seed).fit(x)
    return float(-gm.score_samples(x).mean())


def policy_entropy(policy, states, rng, num_samples=200, n_components=3):
    """Average mixture-fit entropy of the action distribution over a few states."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    vals = []
    for s in states:
        acts = policy.act(np.repeat(s[None], num_samples, axis=0), rng)
        vals.append(gmm_entropy(acts, n_components, seed=int(rng.integers(2**31))))
    return float(np.mean(vals))


@dataclass
class EntropyTuner:
    """Temperature for chain-output exploration noise, tuned by dual ascent on an entropy estimate."""

    act_dim: int
    log_alpha: float = float(np.log(0.1))
    lr: float = 0.03
    noise_scaler: float = 0.1
    num_samples: int = 200
    target_entropy: float | None = None

    def __post_init__(self):
        if self.target_entropy is None:
            self.target_entropy = -float(self.act_dim)

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha))

    @property
    def noise_std(self):
        return self.alpha * self.noise_scaler

    def update(self, entropy_estimate):
        """Gradient step on log(alpha) * (H - H_target); low entropy raises alpha."""
        self.log_alpha -= self.lr * (entropy_estimate - self.target_entropy)
        return self.alpha


def edp_draws(policy, batch, rng):
    a0 = np.asarray(batch["action"], dtype=np.float64)
    states = np.asarray(batch["state"], dtype=np.float64)
    t = sample_times(rng, len(a0))
    noise = rng.standard_normal(a0.shape)
    return {"state": states, "a0": a0, "t": t, "noise": noise,
            "a_t": forward_perturb(policy.schedule, a0, t, noise)}


def edp_action(policy, draws, params=None, eps=None):
    """Clipped posterior-mean action estimate from the policy's noise prediction."""
    f = policy.field
    if eps is None:
        out = f.apply(draws["a_t"], draws["state"], draws["t"], params)
        eps = _to_eps(out, f.head, policy.schedule, draws["a_t"], draws["t"])
    x0 = posterior_mean(policy.schedule, draws["a_t"], draws["t"], eps)
    return ad.clip(x0, policy.action_low, policy.action_high), eps


def edp_loss(policy, critic, draws, params, q_weight=1.0, bc_weight=1.0, normalize_q=True):
    """-Q(s, x0_hat) (optionally scaled by 1/mean|Q|) plus a behavior-cloning matching term."""
    x0, eps = edp_action(policy, draws, params)
    q = critic.q(draws["state"], x0)
    q_term = -ad.mean(q)
    if normalize_q:
        q_term = q_term * (1.0 / (np.abs(ad.value(q)).mean() + 1e-8))
    bc = ad.mean(ad.vsum(ad.square(eps - draws["noise"]), axis=-1))
    return q_weight * q_term + bc_weight * bc


def edp_update(policy, critic, batch, optimizer, rng, q_weight=1.0, bc_weight=1.0, normalize_q=True):
    draws = edp_draws(policy, batch, rng)
    return apply_update(policy, lambda p: edp_loss(policy, critic, draws, p, q_weight, bc_weight, normalize_q),
                        optimizer)
