"""Clipped-ratio policy gradients: Gaussian PPO, denoising-MDP ratios, and flow-matching ratios."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..genmodel import forward_perturb, gaussian_logpdf, matching_error, sample_times, transition
from ..tensornet import DenseNet
from ..tensornet import autodiff as ad
from .common import apply_update, clipped_surrogate, minibatches

RATIO_CLAMP = 5.0


@dataclass
class PGConfig:
    clip_eps: float = 0.2
    epochs: int = 4
    num_minibatches: int = 4
    entropy_coef: float = 1e-4
    num_mc_samples: int = 8
    clamp_ratio: bool = True


def _run_epochs(model, batch, cfg, optimizer, rng, loss_fn):
    n = len(batch["advantage"])
    losses = []
    for _ in range(cfg.epochs):
        for idx in minibatches(n, cfg.num_minibatches, rng):
            mb = {k: v[idx] for k, v in batch.items()}
            losses.append(apply_update(model, lambda p: loss_fn(mb, p), optimizer))
    return float(np.mean(losses))


# Gaussian PPO ---------------------------------------------------------------

def ppo_loss(policy, batch, params, clip_eps=0.2, entropy_coef=1e-4):
    logp = policy.log_prob(batch["state"], batch["action"], params)
    ratio = ad.exp(logp - batch["logp"])
    surr = ad.mean(clipped_surrogate(ratio, batch["advantage"], clip_eps))
    ent = ad.mean(policy.entropy(batch["state"], params))
    return -(surr + entropy_coef * ent)


def ppo_update(policy, batch, cfg, optimizer, rng):
    """Epochs x minibatches of exact-likelihood clipped updates on a flattened rollout."""
    return _run_epochs(policy, batch, cfg, optimizer, rng,
                       lambda mb, p: ppo_loss(policy, mb, p, cfg.clip_eps, cfg.entropy_coef))


# denoising-MDP ratios -----------------------------------------------------------

def chain_record(traj):
    """Per-action chain payload stored at rollout time: states, per-step stds and log-densities."""
    chain = np.stack(traj.states, axis=1)
    stds = np.asarray(traj.stds, dtype=np.float64)
    if np.any(stds <= 0):
        raise ValueError("denoising-MDP ratios need a positive std at every step (set min_std)")
    logp = np.stack([gaussian_logpdf(traj.states[k + 1], traj.means[k], stds[k]) for k in range(len(traj))], 1)
    n = chain.shape[0]
    return {"chain": chain, "chain_std": np.broadcast_to(stds, (n, len(stds))).copy(), "chain_logp": logp}


def dppo_step_logp(policy, batch, params):
    """New per-step log-densities log N(x_{k+1}; mu_theta(x_k), std_k), shape (B, K)."""
    chain, stds = batch["chain"], batch["chain_std"]
    if np.any(stds <= 0):
        raise ValueError("stored denoising std must be positive")
    grid = policy.sampler.time_grid
    cols = []
    for k in range(chain.shape[1] - 1):
        _, mean, _ = transition(policy.field, policy.schedule, policy.sampler, chain[:, k], batch["state"],
                                grid[k], grid[k + 1], params)
        cols.append(ad.reshape(gaussian_logpdf(chain[:, k + 1], mean, stds[:, k:k + 1]), (-1, 1)))
    return ad.concat(cols, axis=1)


def dppo_ratios(policy, batch, params=None):
    return ad.exp(dppo_step_logp(policy, batch, params) - batch["chain_logp"])


def dppo_loss(policy, batch, params, clip_eps=0.2):
    """Clipped surrogate over every (action, denoising step) pair; advantage shared across steps."""
    ratio = dppo_ratios(policy, batch, params)
    adv = np.asarray(batch["advantage"], dtype=np.float64)[:, None]
    return -ad.mean(clipped_surrogate(ratio, adv, clip_eps))


def dppo_update(policy, batch, cfg, optimizer, rng):
    return _run_epochs(policy, batch, cfg, optimizer, rng, lambda mb, p: dppo_loss(policy, mb, p, cfg.clip_eps))


# flow-matching ratios -----------------------------------------------------------

def fpo_draws(policy, n, rng, num_mc_samples=8):
    """(t, noise) pairs reused for both the old and the new loss evaluation."""
    t = sample_times(rng, n * num_mc_samples).reshape(n, num_mc_samples)
    noise = rng.standard_normal((n, num_mc_samples, policy.act_dim))
    return {"mc_t": t, "mc_noise": noise}


def fpo_cfm_loss(policy, states, actions, mc_t, mc_noise, params=None):
    """Per-action Monte Carlo matching loss in noise space, shape (B,)."""
    n, m = mc_t.shape
    d = policy.act_dim
    t = mc_t.reshape(-1)
    eps = mc_noise.reshape(-1, d)
    a0 = np.repeat(np.asarray(actions, dtype=np.float64).reshape(n, d), m, axis=0)
    s = np.repeat(np.atleast_2d(np.asarray(states, dtype=np.float64)), m, axis=0)
    a_t = forward_perturb(policy.schedule, a0, t, eps)
    out = policy.field.apply(a_t, s, t, params)
    err = matching_error(policy.field, out, -eps / policy.schedule.sigma(t)[:, None], policy.schedule, a_t, t, "eps")
    return ad.mean(ad.reshape(err, (n, m)), axis=1)


def fpo_ratios(policy, batch, params=None, clamp=True):
    new = fpo_cfm_loss(policy, batch["state"], batch["action"], batch["mc_t"], batch["mc_noise"], params)
    log_r = batch["cfm_old"] - new
    if clamp:
        log_r = ad.clip(log_r, -RATIO_CLAMP, RATIO_CLAMP)
    return ad.exp(log_r)


def fpo_loss(policy, batch, params, clip_eps=0.05, clamp=True):
    ratio = fpo_ratios(policy, batch, params, clamp)
    return -ad.mean(clipped_surrogate(ratio, np.asarray(batch["advantage"], dtype=np.float64), clip_eps))


def fpo_update(policy, batch, cfg, optimizer, rng):
    return _run_epochs(policy, batch, cfg, optimizer, rng,
                       lambda mb, p: fpo_loss(policy, mb, p, cfg.clip_eps, cfg.clamp_ratio))


# value baseline -------------------------------------------------------------------

def value_update(vnet: DenseNet, batch, optimizer, rng, epochs=4, num_minibatches=4):
    """Regress V(s) on rollout returns."""
    n = len(batch["return"])
    losses = []
    for _ in range(epochs):
        for idx in minibatches(n, num_minibatches, rng):
            s, r = batch["state"][idx], batch["return"][idx]
            losses.append(apply_update(vnet, lambda p: ad.mean(ad.square(vnet.apply(s, p)[:, 0] - r)), optimizer))
    return float(np.mean(losses))
