"""Exp(Q/lambda)-weighted score matching and its mirror-descent variant."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from ..genmodel import clamp_time, convert, forward_perturb, matching_error, sample_times, transition
from ..tensornet import autodiff as ad
from .common import apply_update, repeat_states, softmax_weights
from .policies import GuidanceConfig, draw_actions

PROPOSALS = ("dataset", "prev_policy", "uniform_mix", "reverse_sampling")


def _perturbed(policy, a0, rng):
    t = sample_times(rng, len(a0))
    noise = rng.standard_normal(a0.shape)
    a_t = forward_perturb(policy.schedule, a0, t, noise)
    return a_t, t, -noise / policy.schedule.sigma(t)[:, None]


def truncated_kernel_samples(mean, std, low, high, k, rng):
    """k draws per row from N(mean, std^2) truncated to [low, high], shape (B, k, d)."""
    mean = np.asarray(mean, dtype=np.float64)[:, None, :]
    std = np.broadcast_to(np.asarray(std, dtype=np.float64).reshape(-1, 1, 1), mean.shape)
    size = (mean.shape[0], k, mean.shape[2])
    a = np.broadcast_to((low - mean) / std, size)
    b = np.broadcast_to((high - mean) / std, size)
    return truncnorm.rvs(a, b, loc=np.broadcast_to(mean, size), scale=np.broadcast_to(std, size),
                         size=size, random_state=rng)


def weighted_draws(policy, critic, proposal, batch, lam, rng, cfg=None, ref_policy=None):
    """Sample the coupled (a_t, target score, weight) triples for one update.

    ``batch`` is a mapping with ``state`` and, for the dataset proposal, ``action``.
    Weights are self-normalized exp(Q/lambda) rescaled to have mean one, so an
    infinite temperature recovers plain conditional score matching.  Single-draw
    proposals normalize over the batch; ``uniform_mix`` normalizes over each
    state's own candidates.
    """
    cfg = GuidanceConfig() if cfg is None else cfg
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if proposal not in PROPOSALS:
        raise ValueError(f"unknown proposal {proposal!r}")
    states = np.atleast_2d(np.asarray(batch["state"], dtype=np.float64))
    if states.shape[0] == 0 or states.size == 0:
        raise ValueError("empty proposal batch")
    lo, hi = policy.action_low, policy.action_high
    extra = None

    if proposal in ("dataset", "prev_policy"):
        if proposal == "dataset":
            if "action" not in batch:
                raise ValueError("dataset proposal needs batch['action']")
            a0 = np.asarray(batch["action"], dtype=np.float64).reshape(len(states), -1)
        else:
            if ref_policy is None:
                raise ValueError("prev_policy proposal needs a frozen reference policy")
            a0 = draw_actions(ref_policy, states, rng)
        w = softmax_weights(critic.value(states, a0) / lam) * len(a0)
        a_t, t, target = _perturbed(policy, a0, rng)

    elif proposal == "uniform_mix":
        m = cfg.num_train_samples
        n_prev = int(round(m * cfg.num_behavior_samples / (cfg.num_behavior_samples + 1)))
        n_unif = m - n_prev
        src = policy if ref_policy is None else ref_policy
        rep_prev = repeat_states(states, n_prev)
        rep_unif = repeat_states(states, n_unif)
        a_prev = draw_actions(src, rep_prev, rng)
        a_unif = rng.uniform(lo, hi, size=(len(rep_unif), policy.act_dim))
        if n_prev:
            # normalize among each state's own candidates so Q offsets between states cancel
            q_prev = critic.value(rep_prev, a_prev).reshape(len(states), n_prev)
            w_prev = (softmax_weights(q_prev / lam, axis=1) * n_prev).reshape(-1)
        else:
            w_prev = np.zeros(0)
        w_unif = np.full(len(rep_unif), cfg.entropy_coef)
        states = np.concatenate([rep_prev, rep_unif])
        a0 = np.concatenate([a_prev, a_unif])
        w = np.concatenate([w_prev, w_unif])
        a_t, t, target = _perturbed(policy, a0, rng)

    else:  # reverse_sampling
        _, traj = policy.sample(states, rng)
        k = rng.integers(0, len(traj), size=len(states))
        chain = np.stack(traj.states[:-1], axis=1)
        a_t = chain[np.arange(len(states)), k]
        t = clamp_time(traj.times[k])
        alpha, sigma = policy.schedule.alpha(t), policy.schedule.sigma(t)
        m = cfg.num_reverse_samples
        cand = truncated_kernel_samples(a_t / alpha[:, None], sigma / alpha, lo, hi, m, rng)
        flat = cand.reshape(-1, policy.act_dim)
        q = critic.value(repeat_states(states, m), flat).reshape(len(states), m)
        wk = softmax_weights(q / lam, axis=1)
        mean_a0 = np.einsum("bk,bkd->bd", wk, cand)
        spread = np.einsum("bk,bk->b", wk, np.sum((cand - mean_a0[:, None, :]) ** 2, axis=-1))
        target = -(a_t - alpha[:, None] * mean_a0) / (sigma**2)[:, None]
        # weighted variance of the per-candidate score targets, in score units
        extra = spread * (alpha / sigma**2) ** 2
        w = np.ones(len(states))

    return {"state": states, "a_t": a_t, "t": t, "target": target, "weight": w, "spread": extra}


def _unit_scale_sq(policy, a_t, t, weighting):
    """Squared slope of the affine score -> weighting-space map, per sample."""
    f = policy.field
    space = {"none": "score", "eps": "epsilon", "head": f.head}[weighting]
    e = np.zeros_like(a_t)
    e[:, 0] = 1.0
    d = convert(e, "score", space, policy.schedule, a_t, t) - convert(0 * e, "score", space, policy.schedule, a_t, t)
    return d[:, 0] ** 2


def weighted_loss(policy, draws, params, weighting="head"):
    f = policy.field
    out = f.apply(draws["a_t"], draws["state"], draws["t"], params)
    err = matching_error(f, out, draws["target"], policy.schedule, draws["a_t"], draws["t"], weighting)
    if draws.get("spread") is not None:
        err = err + draws["spread"] * _unit_scale_sq(policy, draws["a_t"], draws["t"], weighting)
    return ad.mean(draws["weight"] * err)


def weighted_matching_update(policy, critic, proposal, batch, lam, optimizer, rng, cfg=None, ref_policy=None,
                             weighting="head"):
    draws = weighted_draws(policy, critic, proposal, batch, lam, rng, cfg, ref_policy)
    return apply_update(policy, lambda p: weighted_loss(policy, draws, p, weighting), optimizer)


@dataclass
class DPMDState:
    """Mirror-descent bookkeeping: current temperature, step count, KL history."""

    lam: float
    steps: int = 0
    adapt_factor: float = 1.5
    kl_history: list = field(default_factory=list)
    lam_history: list = field(default_factory=list)


def chain_kl_proxy(policy, ref_policy, states, rng):
    """Mean over states of sum_k ||mu_k - mu_ref_k||^2 / (2 std_k^2) along the current chain."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    _, traj = policy.sample(states, rng)
    grid = traj.times
    total = np.zeros(len(states))
    for k in range(len(traj)):
        std = traj.stds[k]
        if std <= 0:
            continue
        _, mu_ref, _ = transition(ref_policy.field, ref_policy.schedule, ref_policy.sampler,
                                  traj.states[k], states, grid[k], grid[k + 1])
        total += np.sum((traj.means[k] - mu_ref) ** 2, axis=-1) / (2.0 * std**2)
    return float(total.mean())


def dpmd_step(policy, ref_policy, critic, cfg, optimizer, state, batch, rng, weighting="head", kl_every=1,
              kl_batch=None):
    """Weighted matching against the frozen previous iterate with adaptive temperature.

    Returns (loss, ref_policy, kl) where ``kl`` is None on steps without a KL
    measurement.  The reference is replaced by a snapshot of the current policy
    every ``cfg.ref_refresh_interval`` steps.
    """
    loss = weighted_matching_update(policy, critic, "prev_policy", batch, state.lam, optimizer, rng, cfg,
                                    ref_policy, weighting)
    state.steps += 1
    kl = None
    if state.steps % kl_every == 0:
        kl = chain_kl_proxy(policy, ref_policy, np.atleast_2d(batch["state"])[:kl_batch], rng)
        state.kl_history.append(kl)
        if kl > cfg.target_kl:
            state.lam *= state.adapt_factor
        elif kl < cfg.target_kl / state.adapt_factor:
            state.lam /= state.adapt_factor
        state.lam_history.append(state.lam)
    if state.steps % cfg.ref_refresh_interval == 0:
        ref_policy = policy.copy()
    return loss, ref_policy, kl
