"""Best-of-N selection and Q-gradient (score-injection) guidance."""
from __future__ import annotations

import numpy as np

from ..genmodel import forward_perturb, matching_error, sample_times
from ..tensornet import autodiff as ad
from .common import apply_update, repeat_states, softmax_weights
from .policies import draw_actions


def bon_candidates(policy, critic, state, n, rng):
    """Candidate actions (S, N, d) and their ensemble-min Q values (S, N)."""
    if n < 1:
        raise ValueError("Best-of-N needs N >= 1")
    states = np.atleast_2d(np.asarray(state, dtype=np.float64))
    rep = repeat_states(states, n)
    acts = draw_actions(policy, rep, rng)
    q = critic.q_min(rep, acts)
    return acts.reshape(len(states), n, -1), q.reshape(len(states), n)


def bon_select(policy, critic, state, n, rng):
    """Highest-Q action out of ``n`` policy draws; ties go to the lowest index."""
    acts, q = bon_candidates(policy, critic, state, n, rng)
    idx = np.argmax(q, axis=1)
    out = acts[np.arange(len(acts)), idx]
    return out[0] if np.ndim(state) == 1 else out


QSM_TARGETS = ("mixed", "direct")


def qsm_draws(policy, critic, states, lam, num_samples, rng, target="mixed"):
    """Fixed random quantities for one QSM step.

    ``target="direct"`` regresses onto grad_a Q(s, a_t) / lambda at the noisy
    action.  ``"mixed"`` uses alpha grad_a Q(s, a0) / lambda - sigma eps, whose
    conditional mean given a_t is the intermediate score of exp(Q/lambda) at
    every noise level, so its fixed point is the tilted policy itself.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if target not in QSM_TARGETS:
        raise ValueError(f"unknown QSM target {target!r}")
    rep = repeat_states(states, num_samples)
    a0 = draw_actions(policy, rep, rng)
    t = sample_times(rng, len(rep))
    noise = rng.standard_normal(a0.shape)
    a_t = forward_perturb(policy.schedule, a0, t, noise)
    if target == "direct":
        goal = critic.action_grad(rep, a_t) / lam
    else:
        alpha = policy.schedule.alpha(t)[:, None]
        sigma = policy.schedule.sigma(t)[:, None]
        goal = alpha * critic.action_grad(rep, a0) / lam - sigma * noise
    return {"state": rep, "a_t": a_t, "t": t, "target": goal}


def qsm_loss(policy, draws, params):
    """Noise-space regression of the policy score onto grad_a Q / lambda."""
    f = policy.field
    out = f.apply(draws["a_t"], draws["state"], draws["t"], params)
    err = matching_error(f, out, draws["target"], policy.schedule, draws["a_t"], draws["t"], "eps")
    return ad.mean(err)


def qsm_update(policy, critic, states, lam, num_samples, optimizer, rng, target="mixed"):
    draws = qsm_draws(policy, critic, states, lam, num_samples, rng, target)
    return apply_update(policy, lambda p: qsm_loss(policy, draws, p), optimizer)


def posterior_kernel_samples(schedule, a_t, t, k, rng):
    """Draws from N(a_t / alpha, (sigma / alpha)^2 I), shape (B, K, d)."""
    a_t = np.atleast_2d(np.asarray(a_t, dtype=np.float64))
    alpha, sigma = float(schedule.alpha(t)), float(schedule.sigma(t))
    z = rng.standard_normal((a_t.shape[0], k, a_t.shape[1]))
    return a_t[:, None, :] / alpha + (sigma / alpha) * z


def idem_intermediate_score(critic, state, a_t, t, schedule, k, lam, rng):
    """Self-normalized importance estimate of the Q-gradient under the posterior kernel.

    Returns sum_k w_k grad_a Q(s, a0_k) with w = softmax(Q(s, a0_k) / lambda) and
    a0_k drawn from the inverted perturbation kernel.  The intermediate score of
    the exp(Q/lambda)-tilted marginal is this quantity divided by
    ``lambda * alpha(t)``; callers fold that factor into their step size.
    """
    if k < 1:
        raise ValueError("K must be at least 1")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    a_t = np.atleast_2d(np.asarray(a_t, dtype=np.float64))
    cand = posterior_kernel_samples(schedule, a_t, t, k, rng)
    b, _, d = cand.shape
    flat = cand.reshape(b * k, d)
    st = repeat_states(np.broadcast_to(np.atleast_2d(state), (b, np.shape(np.atleast_2d(state))[-1])), k)
    q = critic.value(st, flat).reshape(b, k)
    grads = critic.action_grad(st, flat).reshape(b, k, d)
    w = softmax_weights(q / lam, axis=1)
    return np.einsum("bk,bkd->bd", w, grads)

