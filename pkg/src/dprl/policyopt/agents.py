"""Algorithm wrappers: one agent per method, sharing critic and buffer plumbing.

Agents read a nested config mapping (see ``dprl.harness.config.DEFAULTS``) and
expose ``act``, ``update`` and the nets/scalars needed for checkpoints.
"""
from __future__ import annotations

import numpy as np

from ..genmodel import score_matching_loss
from ..rlcore import CriticEnsemble, bellman_target, critic_update, make_critic_optimizers
from ..tensornet import DenseNet, Optimizer, optimizer_step
from ..tensornet import autodiff as ad
from .onpolicy import (
    PGConfig, chain_record, dppo_update, fpo_cfm_loss, fpo_draws, fpo_update, ppo_update, value_update,
)
from .policies import DiffusionPolicy, GaussianPolicy, GuidanceConfig
from .qguided import bon_select, qsm_update
from .reparam import EntropyTuner, edp_update, policy_entropy, reparam_bptt_update
from .sac import sac_update
from .weighted import DPMDState, dpmd_step, weighted_matching_update

OFF_POLICY = ("sac", "qsm", "sdac", "qvpo", "dpmd", "dacer", "edp", "bon")
ON_POLICY = ("ppo", "dppo", "fpo")
ALGORITHMS = OFF_POLICY + ON_POLICY
FAMILY = {
    "bon": "bon", "qsm": "qvalue", "sdac": "weighted", "qvpo": "weighted", "dpmd": "weighted",
    "dacer": "reparam", "edp": "reparam", "dppo": "pg", "fpo": "pg", "sac": "reparam", "ppo": "pg",
}


def _guidance(cfg):
    g = cfg["guidance"]
    keys = GuidanceConfig.__dataclass_fields__.keys()
    return GuidanceConfig(**{k: g[k] for k in keys if k in g}, family=FAMILY[cfg["algo"]])


def _diffusion_policy(cfg, obs_dim, act_dim, rng):
    a, d = cfg["actor"], cfg["diffusion"]
    return DiffusionPolicy.create(
        obs_dim, act_dim, hidden=tuple(a["hidden"]), activation=a["activation"], embed_dim=a["embed_dim"],
        head=d["head"], schedule=d["schedule"], num_steps=d["steps"], mode=d["mode"], eta=d["eta"],
        min_std=d["min_std"], rng=rng,
    )


class Agent:
    algo = None
    on_policy = False

    def __init__(self, cfg, obs_dim, act_dim, rng):
        self.cfg = cfg
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.updates = 0

    def act(self, obs, rng, explore=True):
        raise NotImplementedError

    def nets(self):
        """Mapping name -> DenseNet covering every trainable or target network."""
        raise NotImplementedError

    def scalars(self):
        return {}

    def load_scalars(self, values):
        for k, v in values.items():
            setattr(self, k, v)


class OffPolicyAgent(Agent):
    def __init__(self, cfg, obs_dim, act_dim, rng):
        super().__init__(cfg, obs_dim, act_dim, rng)
        c = cfg["critic"]
        self.critics = CriticEnsemble.create(obs_dim, act_dim, tuple(c["hidden"]), c["activation"],
                                             c["ensemble_size"], rng, use_min=c["use_min"])
        self.critic_opts = make_critic_optimizers(self.critics, c["lr"])
        self.gamma = cfg["train"]["gamma"]
        self.ema = c["ema"]

    def nets(self):
        out = {f"critic{i}": n for i, n in enumerate(self.critics.members)}
        out.update({f"target{i}": n for i, n in enumerate(self.critics.targets)})
        out["policy"] = self.policy.net if isinstance(self.policy, GaussianPolicy) else self.policy.field.net
        return out

    def target_actions(self, states, rng):
        return self.policy.act(states, rng)

    def critic_step(self, batch, rng):
        y = bellman_target(self.critics, batch, self.target_actions, self.gamma, rng)
        return critic_update(self.critics, batch, y, self.critic_opts, self.ema)

    def update(self, batch, rng):
        self.updates += 1
        out = {"critic_loss": self.critic_step(batch, rng)}
        out.update(self.actor_step(batch, rng))
        return out


class SACAgent(OffPolicyAgent):
    algo = "sac"

    def __init__(self, cfg, obs_dim, act_dim, rng):
        super().__init__(cfg, obs_dim, act_dim, rng)
        a, s = cfg["actor"], cfg["sac"]
        self.policy = GaussianPolicy.create(obs_dim, act_dim, tuple(a["gaussian_hidden"]), a["gaussian_activation"],
                                            squash=True, rng=rng)
        self.policy.log_alpha = float(np.log(s["init_alpha"]))
        self.opt = Optimizer("adam", a["lr"])

    def act(self, obs, rng, explore=True):
        return self.policy.act(obs, rng, deterministic=not explore)

    def update(self, batch, rng):
        self.updates += 1
        s = self.cfg["sac"]
        return sac_update(self.policy, self.critics, batch, self.opt, self.critic_opts, rng, self.gamma, self.ema,
                          s["alpha_lr"], s["auto_alpha"])

    def scalars(self):
        return {"log_alpha": self.policy.log_alpha}

    def load_scalars(self, values):
        self.policy.log_alpha = float(values.get("log_alpha", self.policy.log_alpha))


class DiffusionAgent(OffPolicyAgent):
    """Off-policy diffusion actor; ``actor_step`` dispatches on the algorithm id."""

    def __init__(self, cfg, obs_dim, act_dim, rng, algo):
        super().__init__(cfg, obs_dim, act_dim, rng)
        self.algo = algo
        self.policy = _diffusion_policy(cfg, obs_dim, act_dim, rng)
        self.opt = Optimizer("adam", cfg["actor"]["lr"], max_grad_norm=cfg["actor"]["max_grad_norm"])
        self.guidance = _guidance(cfg)
        g = cfg["guidance"]
        self.lam = float(g["lam"])
        self.ref_policy = self.policy.copy() if algo == "dpmd" else None
        self.dpmd = DPMDState(self.lam) if algo == "dpmd" else None
        self.tuner = None
        if algo == "dacer":
            dc = cfg["dacer"]
            self.tuner = EntropyTuner(act_dim, float(np.log(dc["init_alpha"])), dc["alpha_lr"], dc["noise_scaler"],
                                      dc["entropy_num_samples"])

    def act(self, obs, rng, explore=True):
        obs = np.atleast_2d(obs)
        n = self.cfg["eval"]["bon_n"] if not explore else 0
        if self.algo == "bon":
            n = self.guidance.num_samples
        if n and n > 1:
            return bon_select(self.policy, self.critics, obs, n, rng)
        a = self.policy.act(obs, rng)
        if explore and self.tuner is not None:
            a = np.clip(a + self.tuner.noise_std * rng.standard_normal(a.shape), -1.0, 1.0)
        return a

    def actor_step(self, batch, rng):
        g, cfg = self.guidance, self.cfg
        algo, states = self.algo, batch.state
        weighting = cfg["guidance"]["weighting"]
        if algo == "qsm":
            loss = qsm_update(self.policy, self.critics, states, self.lam, g.num_samples, self.opt, rng,
                              cfg["guidance"]["qsm_target"])
        elif algo == "sdac":
            loss = weighted_matching_update(self.policy, self.critics, "reverse_sampling", {"state": states},
                                            self.lam, self.opt, rng, g, weighting=weighting)
        elif algo == "qvpo":
            loss = weighted_matching_update(self.policy, self.critics, "uniform_mix", {"state": states},
                                            self.lam, self.opt, rng, g, ref_policy=self.policy.copy(),
                                            weighting=weighting)
        elif algo == "dpmd":
            return self._dpmd_step(states, rng, weighting)
        elif algo == "dacer":
            if self.updates % cfg["dacer"]["actor_every"]:
                return {}
            loss = reparam_bptt_update(self.policy, self.critics, states, self.opt, rng, self.tuner)
            return {"actor_loss": loss, "alpha": self.tuner.alpha}
        elif algo == "edp":
            e = cfg["edp"]
            loss = edp_update(self.policy, self.critics, {"state": states, "action": batch.action}, self.opt, rng,
                              e["q_weight"], e["bc_weight"])
        elif algo == "bon":
            loss, grad = score_matching_loss(self.policy.field, (states, batch.action), self.policy.schedule, rng,
                                             weighting)
            self.policy.params = optimizer_step(self.opt, self.policy.params, grad)
        else:
            raise ValueError(f"unknown algorithm {algo!r}")
        return {"actor_loss": loss}

    def _dpmd_step(self, states, rng, weighting):
        d = self.cfg["dpmd"]
        loss, self.ref_policy, kl = dpmd_step(self.policy, self.ref_policy, self.critics, self.guidance, self.opt,
                                              self.dpmd, {"state": states}, rng, weighting, d["kl_interval"],
                                              d["kl_batch"])
        out = {"actor_loss": loss, "lambda": self.dpmd.lam}
        if kl is not None:
            out["kl_proxy"] = kl
        return out

    def periodic(self, replay, frame, rng):
        """Slow-timescale work: DACER temperature tuning."""
        if self.tuner is None or len(replay) == 0:
            return {}
        states = replay.sample(self.cfg["dacer"]["entropy_states"], rng).state
        h = policy_entropy(self.policy, states, rng, self.tuner.num_samples)
        return {"entropy": h, "alpha": self.tuner.update(h)}

    def nets(self):
        out = super().nets()
        if self.ref_policy is not None:
            out["reference"] = self.ref_policy.field.net
        return out

    def scalars(self):
        out = {}
        if self.dpmd is not None:
            out["lam"] = self.dpmd.lam
            out["dpmd_steps"] = self.dpmd.steps
        if self.tuner is not None:
            out["log_alpha"] = self.tuner.log_alpha
        return out

    def load_scalars(self, values):
        if self.dpmd is not None:
            self.dpmd.lam = float(values.get("lam", self.dpmd.lam))
            self.dpmd.steps = int(values.get("dpmd_steps", self.dpmd.steps))
        if self.tuner is not None:
            self.tuner.log_alpha = float(values.get("log_alpha", self.tuner.log_alpha))


class OnPolicyAgent(Agent):
    on_policy = True

    def __init__(self, cfg, obs_dim, act_dim, rng, algo):
        super().__init__(cfg, obs_dim, act_dim, rng)
        self.algo = algo
        p, a = cfg["pg"], cfg["actor"]
        if algo == "ppo":
            self.policy = GaussianPolicy.create(obs_dim, act_dim, tuple(a["gaussian_hidden"]), "tanh", squash=False,
                                                rng=rng, init_log_std=p["init_log_std"])
        else:
            self.policy = _diffusion_policy(cfg, obs_dim, act_dim, rng)
        self.value = DenseNet.init([obs_dim, *p["value_hidden"], 1], "tanh", rng)
        self.opt = Optimizer("adam", p["lr"], max_grad_norm=p["max_grad_norm"])
        self.value_opt = Optimizer("adam", p["value_lr"], max_grad_norm=p["max_grad_norm"])
        clip = p["fpo_clip_eps"] if algo == "fpo" else p["clip_eps"]
        self.pg = PGConfig(clip, p["epochs"], p["num_minibatches"], p["entropy_coef"],
                           cfg["guidance"]["num_mc_samples"], p["clamp_ratio"])

    def nets(self):
        pol = self.policy.net if isinstance(self.policy, GaussianPolicy) else self.policy.field.net
        return {"policy": pol, "value": self.value}

    def values(self, obs):
        return self.value.forward(np.atleast_2d(obs))[:, 0]

    def act(self, obs, rng, explore=True):
        obs = np.atleast_2d(obs)
        if self.algo == "ppo":
            return self.policy.act(obs, rng, deterministic=not explore)
        return self.policy.act(obs, rng)

    def act_with_record(self, obs, rng):
        """Exploration action plus the per-action payload the update needs later."""
        obs = np.atleast_2d(obs)
        if self.algo == "ppo":
            raw, logp = self.policy.sample(obs, rng)
            raw = ad.value(raw)
            return np.clip(raw, -1.0, 1.0), {"raw_action": raw, "logp": ad.value(logp)}
        a, traj = self.policy.sample(obs, rng)
        if self.algo == "dppo":
            return a, chain_record(traj)
        d = fpo_draws(self.policy, len(obs), rng, self.pg.num_mc_samples)
        d["cfm_old"] = fpo_cfm_loss(self.policy, obs, a, d["mc_t"], d["mc_noise"])
        return a, d

    def update(self, batch, rng):
        self.updates += 1
        if self.algo == "ppo":
            b = dict(batch)
            b["action"] = b.pop("raw_action")
            loss = ppo_update(self.policy, b, self.pg, self.opt, rng)
        elif self.algo == "dppo":
            loss = dppo_update(self.policy, batch, self.pg, self.opt, rng)
        else:
            loss = fpo_update(self.policy, batch, self.pg, self.opt, rng)
        vloss = value_update(self.value, batch, self.value_opt, rng, self.pg.epochs, self.pg.num_minibatches)
        return {"actor_loss": loss, "value_loss": vloss}


def make_agent(cfg, obs_dim, act_dim, rng):
    algo = cfg["algo"]
    if algo == "sac":
        return SACAgent(cfg, obs_dim, act_dim, rng)
    if algo in OFF_POLICY:
        return DiffusionAgent(cfg, obs_dim, act_dim, rng, algo)
    if algo in ON_POLICY:
        return OnPolicyAgent(cfg, obs_dim, act_dim, rng, algo)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
