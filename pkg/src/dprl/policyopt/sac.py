"""Gaussian soft actor-critic baseline."""
from __future__ import annotations

import numpy as np

from ..rlcore import bellman_target, critic_update
from ..tensornet import autodiff as ad
from .common import apply_update


def sac_actor_loss(policy, critics, states, params, rng, noise=None):
    a, logp = policy.sample(states, rng, params=params, noise=noise)
    return ad.mean(policy.alpha * logp - critics.q(states, a)), logp


def alpha_gradient(policy, logp):
    """d/d(log alpha) of -log(alpha) * (log pi + target entropy), averaged."""
    return -float(np.mean(ad.value(logp) + policy.target_entropy))


def sac_update(policy, critics, batch, actor_opt, critic_opts, rng, gamma=0.99, ema_rate=0.005,
               alpha_lr=3e-4, auto_alpha=True, update_actor=True):
    """Critic regression, reparameterized actor step and temperature dual ascent."""

    def sampler(states, r):
        a, logp = policy.sample(states, r)
        return ad.value(a), -policy.alpha * ad.value(logp)

    y = bellman_target(critics, batch, sampler, gamma, rng)
    out = {"critic_loss": critic_update(critics, batch, y, critic_opts, ema_rate)}
    if not update_actor:
        return out
    noise = rng.standard_normal((len(batch.state), policy.act_dim))
    holder = {}

    def loss_fn(p):
        loss, logp = sac_actor_loss(policy, critics, batch.state, p, rng, noise)
        holder["logp"] = logp
        return loss

    out["actor_loss"] = apply_update(policy, loss_fn, actor_opt)
    if auto_alpha:
        policy.log_alpha -= alpha_lr * alpha_gradient(policy, holder["logp"])
    out["alpha"] = policy.alpha
    out["entropy"] = -float(np.mean(ad.value(holder["logp"])))
    return out
