"""Reverse-mode vs central-difference checks for every trainable objective.

Each case builds a small random problem from a seed, freezes all sampled
randomness, and returns the max relative error over random parameter
coordinates.  Smooth activations keep the difference quotients away from kinks.
"""
import numpy as np

from dprl.genmodel import NoiseSchedule, ScoreField, score_matching_loss
from dprl.policyopt import (
    DiffusionPolicy,
    GaussianPolicy,
    GuidanceConfig,
    bptt_loss,
    chain_record,
    dppo_loss,
    edp_action,
    edp_draws,
    edp_loss,
    fpo_cfm_loss,
    fpo_draws,
    fpo_loss,
    loss_and_grad,
    ppo_loss,
    qsm_draws,
    qsm_loss,
    sac_actor_loss,
    weighted_draws,
    weighted_loss,
)
from dprl.rlcore import CriticEnsemble
from dprl.tensornet import autodiff as ad

from fdcheck import check_param_grad

OBS, ACT = 2, 2


def _policy(rng, steps=3, min_std=0.0, mode="sde"):
    pol = DiffusionPolicy.create(OBS, ACT, hidden=(8, 8), activation="mish", embed_dim=4, num_steps=steps,
                                 mode=mode, min_std=min_std, rng=rng)
    pol.params = pol.params + 0.05 * rng.normal(size=pol.params.size)
    return pol


def _critic(rng):
    return CriticEnsemble.create(OBS, ACT, hidden=(8, 8), activation="tanh", rng=rng)


def _states(rng, n=4):
    return rng.normal(size=(n, OBS))


def _scalar(x):
    return float(ad.value(x))


def _err(loss_fn, params, rng):
    _, g = loss_and_grad(loss_fn, params)
    return check_param_grad(lambda p: _scalar(loss_fn(p)), g, params, rng)


def case_score_matching(seed):
    rng = np.random.default_rng(seed)
    f = ScoreField.create(ACT, OBS, hidden=(8, 8), activation="mish", embed_dim=4, rng=rng)
    batch = (_states(rng, 5), rng.uniform(-1, 1, (5, ACT)))
    sch = NoiseSchedule()
    _, g = score_matching_loss(f, batch, sch, np.random.default_rng(seed))
    return check_param_grad(
        lambda p: score_matching_loss(f, batch, sch, np.random.default_rng(seed), params=p)[0], g, f.params, rng)


def case_qsm(seed):
    rng = np.random.default_rng(seed)
    pol, crit = _policy(rng), _critic(rng)
    draws = qsm_draws(pol, crit, _states(rng), 0.1, 3, rng, target=("mixed", "direct")[seed % 2])
    return _err(lambda p: qsm_loss(pol, draws, p), pol.params, rng)


def case_weighted_matching(seed):
    rng = np.random.default_rng(seed)
    pol, crit = _policy(rng), _critic(rng)
    proposal = ("dataset", "prev_policy", "uniform_mix", "reverse_sampling")[seed % 4]
    s = _states(rng)
    batch = {"state": s, "action": rng.uniform(-1, 1, (len(s), ACT))}
    cfg = GuidanceConfig(num_reverse_samples=16, num_train_samples=6)
    draws = weighted_draws(pol, crit, proposal, batch, 0.5, rng, cfg, ref_policy=pol.copy())
    weighting = ("head", "eps", "none")[seed % 3]
    return _err(lambda p: weighted_loss(pol, draws, p, weighting), pol.params, rng)


def case_bptt(seed):
    rng = np.random.default_rng(seed)
    pol, crit = _policy(rng, steps=4), _critic(rng)
    s = _states(rng)
    explore = 0.1 * (seed % 2)
    return _err(lambda p: bptt_loss(pol, crit, s, p, np.random.default_rng(seed), explore), pol.params, rng)


def case_edp(seed):
    rng = np.random.default_rng(seed)
    pol, crit = _policy(rng), _critic(rng)
    s = _states(rng, 6)
    draws = edp_draws(pol, {"state": s, "action": rng.uniform(-0.9, 0.9, (6, ACT))}, rng)
    _, g = loss_and_grad(lambda p: edp_loss(pol, crit, draws, p), pol.params)
    # the 1/mean|Q| normalizer is a stop-gradient constant; hold it at its current value
    x0q = crit.q(s, edp_action(pol, draws)[0])
    scale = 1.0 / (np.abs(ad.value(x0q)).mean() + 1e-8)
    return check_param_grad(
        lambda p: _scalar(edp_loss(pol, crit, draws, p, q_weight=scale, normalize_q=False)), g, pol.params, rng)


def _rollout_chain(pol, s, rng):
    _, traj = pol.sample(s, rng)
    rec = chain_record(traj)
    rec["state"] = s
    rec["advantage"] = rng.normal(size=len(s))
    return rec


def case_dppo(seed):
    rng = np.random.default_rng(seed)
    old = _policy(rng, steps=3, min_std=0.1, mode="ddpm_ancestral")
    batch = _rollout_chain(old, _states(rng), rng)
    pol = old.copy()
    pol.params = old.params + 0.02 * rng.normal(size=old.params.size)
    return _err(lambda p: dppo_loss(pol, batch, p, 0.2), pol.params, rng)


def case_fpo(seed):
    rng = np.random.default_rng(seed)
    old = _policy(rng)
    s = _states(rng)
    a = rng.uniform(-1, 1, (len(s), ACT))
    draws = fpo_draws(old, len(s), rng, 4)
    batch = {"state": s, "action": a, "advantage": rng.normal(size=len(s)), **draws}
    batch["cfm_old"] = ad.value(fpo_cfm_loss(old, s, a, draws["mc_t"], draws["mc_noise"]))
    pol = old.copy()
    pol.params = old.params + 0.01 * rng.normal(size=old.params.size)
    clip = (0.05, None)[seed % 2]
    return _err(lambda p: fpo_loss(pol, batch, p, clip, clamp=True), pol.params, rng)


def _gaussian(rng, squash=True):
    pol = GaussianPolicy.create(OBS, ACT, hidden=(8, 8), activation="tanh", squash=squash, rng=rng,
                                init_log_std=-0.5)
    pol.log_alpha = float(rng.normal(0, 0.5))
    return pol


def case_sac(seed):
    rng = np.random.default_rng(seed)
    pol, crit = _gaussian(rng), _critic(rng)
    s = _states(rng)
    noise = rng.normal(size=(len(s), ACT))
    return _err(lambda p: sac_actor_loss(pol, crit, s, p, rng, noise)[0], pol.params, rng)


def case_ppo(seed):
    rng = np.random.default_rng(seed)
    old = _gaussian(rng, squash=bool(seed % 2))
    s = _states(rng, 8)
    a, logp = old.sample(s, rng)
    batch = {"state": s, "action": ad.value(a), "logp": ad.value(logp), "advantage": rng.normal(size=8)}
    pol = old.copy()
    pol.params = old.params + 0.05 * rng.normal(size=old.params.size)
    return _err(lambda p: ppo_loss(pol, batch, p, 0.2, 1e-4), pol.params, rng)


CASES = {
    "score_matching": case_score_matching,
    "qsm": case_qsm,
    "weighted_matching": case_weighted_matching,
    "bptt": case_bptt,
    "edp": case_edp,
    "dppo": case_dppo,
    "fpo": case_fpo,
    "sac": case_sac,
    "ppo": case_ppo,
}
