"""Training loop, evaluation protocol, metrics and checkpoints."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from pathlib import Path

import numpy as np

from ..envsim import make_env, optimal_policy_density, read_dataset, tv_distance
from ..policyopt import make_agent
from ..rlcore import ReplayBuffer, RolloutBuffer
from ..tensornet import DenseNet, DimensionError
from .config import config_hash, dump_config, make_config

RUN_ROOT_ENV = "DPRL_RUN_ROOT"
METRIC_FIELDS = ("frame", "name", "value", "seed", "wall_time")
MAX_BAD_EVALS = 3


class RunAborted(RuntimeError):
    pass


# seeding --------------------------------------------------------------------------

def seed_streams(seed):
    """Independent generators for init, environment, agent and evaluation randomness."""
    init, env, agent, evals = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init),
        "env": np.random.default_rng(env),
        "agent": np.random.default_rng(agent),
        "eval": evals,
    }


def eval_rng(eval_seq, index):
    """Generator for the ``index``-th evaluation, independent of how many came before."""
    return np.random.default_rng(np.random.SeedSequence(eval_seq.entropy, spawn_key=(*eval_seq.spawn_key, index)))


# metrics --------------------------------------------------------------------------

class MetricWriter:
    def __init__(self, path, seed):
        self.path = Path(path)
        self.seed = seed
        self.start = time.perf_counter()
        self.last_frame = -1
        with self.path.open("w", newline="") as fh:
            csv.writer(fh).writerow(METRIC_FIELDS)

    def write(self, frame, values):
        if frame < self.last_frame:
            raise ValueError("metric rows must be ordered by frame")
        self.last_frame = frame
        wall = round(time.perf_counter() - self.start, 3)
        with self.path.open("a", newline="") as fh:
            w = csv.writer(fh)
            for name in sorted(values):
                w.writerow((int(frame), name, repr(float(values[name])), self.seed, wall))


def read_metrics(path):
    """Rows as dicts with typed fields."""
    out = []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            out.append({"frame": int(row["frame"]), "name": row["name"], "value": float(row["value"]),
                        "seed": int(row["seed"]), "wall_time": float(row["wall_time"])})
    return out


def metric_curve(path, name="eval_return"):
    rows = [r for r in read_metrics(path) if r["name"] == name]
    return np.array([r["frame"] for r in rows]), np.array([r["value"] for r in rows])


# checkpoints ------------------------------------------------------------------------

def save_checkpoint(agent, cfg, path, frame):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, net in agent.nets().items():
        fname = f"{name}.fpnet"
        net.save(path / fname)
        files[name] = fname
    manifest = {
        "algo": cfg["algo"],
        "env_id": cfg["env"]["id"],
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "frame": int(frame),
        "nets": files,
        "scalars": agent.scalars(),
        "config": cfg,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(path):
    """Rebuild an agent from a checkpoint directory; returns (agent, manifest)."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    cfg = make_config(base=manifest["config"])
    agent = make_agent(cfg, manifest["obs_dim"], manifest["act_dim"], np.random.default_rng(0))
    nets = agent.nets()
    for name, fname in manifest["nets"].items():
        loaded = DenseNet.load(path / fname)
        if name not in nets:
            raise ValueError(f"checkpoint net {name!r} has no slot in a {cfg['algo']} agent")
        if list(loaded.layer_widths) != list(nets[name].layer_widths):
            raise DimensionError(nets[name].layer_widths, loaded.layer_widths, f"net {name}")
        nets[name].params = loaded.params.copy()
    agent.load_scalars(manifest["scalars"])
    return agent, manifest


# evaluation -----------------------------------------------------------------------

def run_episodes(env, act_fn, episodes, rng, frame_skip=1):
    """Undiscounted returns of ``episodes`` parallel episodes."""
    state = env.reset(rng, episodes)
    returns = np.zeros(episodes)
    alive = np.ones(episodes, dtype=bool)
    for t in range(env.spec.horizon):
        action = np.clip(np.asarray(act_fn(state, rng), dtype=np.float64).reshape(episodes, -1), -1.0, 1.0)
        for _ in range(frame_skip):
            rec = env.step(state, action, rng, t)
            returns += np.where(alive, rec.reward, 0.0)
            alive &= ~rec.terminal
            state = rec.next_state
            if not alive.any():
                break
        if not alive.any():
            break
    return returns


def evaluate(checkpoint, env=None, episodes=10, rng=None):
    """Mean and std of undiscounted return for a checkpoint directory or a live agent."""
    if isinstance(checkpoint, (str, os.PathLike)):
        agent, manifest = load_checkpoint(checkpoint)
        env = make_env(manifest["env_id"]) if env is None else env
    else:
        agent = checkpoint
        if env is None:
            raise ValueError("pass an env when evaluating a live agent")
    if env.obs_dim != agent.obs_dim or env.act_dim != agent.act_dim:
        raise DimensionError((agent.obs_dim, agent.act_dim), (env.obs_dim, env.act_dim), "env vs checkpoint")
    rng = np.random.default_rng(0) if rng is None else rng
    skip = agent.cfg["env"]["frame_skip"]
    ret = run_episodes(env, lambda s, r: agent.act(s, r, explore=False), episodes, rng, skip)
    return float(ret.mean()), float(ret.std())


def oracle_tv(agent, env, lam, n, rng):
    """TV distance between the agent's actions at the bandit context and the tilted-uniform optimum."""
    state = env.reset(rng)
    density = optimal_policy_density(env, state, lam)
    acts = np.clip(agent.act(np.repeat(state[None], n, axis=0), rng, explore=False), -1.0, 1.0)
    return tv_distance(acts, density)


# training -------------------------------------------------------------------------

def run_dir_for(cfg, root=None):
    root = Path(root or os.environ.get(RUN_ROOT_ENV, "runs"))
    base = root / f"{cfg['algo']}_{cfg['env']['id']}_s{cfg['seed']}_{config_hash(cfg)}"
    path, i = base, 1
    while path.exists():
        path = Path(f"{base}_{i}")
        i += 1
    return path


def _step_env(env, state, action, rng, t, skip):
    """Repeat ``action`` for ``skip`` frames; returns a single aggregated record."""
    rec = env.step(state, action, rng, t)
    reward, nxt = rec.reward.copy(), rec.next_state
    terminal, truncated = rec.terminal.copy(), rec.truncated.copy()
    for _ in range(skip - 1):
        if np.all(terminal | truncated):
            break
        r2 = env.step(nxt, action, rng, t)
        live = ~(terminal | truncated)
        reward += np.where(live, r2.reward, 0.0)
        nxt = np.where(live[:, None], r2.next_state, nxt)
        terminal |= live & r2.terminal
    return type(rec)(state, action, reward, nxt, terminal, truncated)


class _Trainer:
    def __init__(self, cfg, run_dir):
        self.cfg = cfg
        self.run_dir = Path(run_dir)
        self.env = make_env(cfg["env"]["id"])
        self.streams = seed_streams(cfg["seed"])
        self.agent = make_agent(cfg, self.env.obs_dim, self.env.act_dim, self.streams["init"])
        self.metrics = MetricWriter(self.run_dir / "metrics.csv", cfg["seed"])
        self.n_eval = 0
        self.bad_evals = 0
        self.window = {}
        self.next_eval = cfg["eval"]["interval"]
        self.stopped = False

    def record(self, losses):
        for k, v in losses.items():
            self.window.setdefault(k, []).append(float(v))

    def safe_update(self, batch):
        try:
            return self.agent.update(batch, self.streams["agent"])
        except FloatingPointError:
            return {"actor_loss": math.nan}

    def maybe_eval(self, frame, force=False):
        if not force and frame < self.next_eval:
            return
        while self.next_eval <= frame:
            self.next_eval += self.cfg["eval"]["interval"]
        rng = eval_rng(self.streams["eval"], self.n_eval)
        self.n_eval += 1
        e = self.cfg["eval"]
        ret = run_episodes(self.env, lambda s, r: self.agent.act(s, r, explore=False), e["episodes"], rng,
                           self.cfg["env"]["frame_skip"])
        row = {"eval_return": ret.mean(), "eval_return_std": ret.std()}
        if e["tv_samples"] and hasattr(self.env, "q_star"):
            row["tv_to_oracle"] = oracle_tv(self.agent, self.env, self.cfg["guidance"]["lam"], e["tv_samples"], rng)
        bad = False
        for k, vals in self.window.items():
            row[k] = float(np.mean(vals))
            bad |= not np.all(np.isfinite(vals))
        self.window = {}
        self.metrics.write(frame, row)
        goal = self.cfg["train"]["stop_return"]
        self.stopped = goal is not None and row["eval_return"] >= goal
        if self.cfg["log"]["checkpoint"]:
            save_checkpoint(self.agent, self.cfg, self.run_dir / "checkpoint", frame)
        self.bad_evals = self.bad_evals + 1 if bad else 0
        if self.bad_evals >= MAX_BAD_EVALS:
            diag = {"frame": frame, "last_metrics": row, "config": self.cfg,
                    "reason": f"non-finite losses in {MAX_BAD_EVALS} consecutive evaluation windows"}
            (self.run_dir / "diagnostics.json").write_text(json.dumps(diag, indent=2, default=str))
            raise RunAborted(diag["reason"] + f"; see {self.run_dir / 'diagnostics.json'}")

    # off-policy ---------------------------------------------------------------
    def run_off_policy(self):
        cfg, env, agent = self.cfg, self.env, self.agent
        tr, n, skip = cfg["train"], cfg["env"]["num_envs"], cfg["env"]["frame_skip"]
        rng_env, rng_agent = self.streams["env"], self.streams["agent"]
        buf = ReplayBuffer(tr["buffer_size"], env.obs_dim, env.act_dim)
        if cfg["offline"]["dataset"]:
            rec, _ = read_dataset(cfg["offline"]["dataset"])
            buf.add(rec)
            return self._run_offline(buf)
        state = env.reset(rng_env, n)
        t_ep = np.zeros(n, dtype=int)
        frame, steps = 0, 0
        alpha_every = cfg["dacer"]["alpha_interval"]
        while frame < cfg["frames"] and not self.stopped:
            if frame < tr["warmup"]:
                action = rng_agent.uniform(-1.0, 1.0, (n, env.act_dim))
            else:
                action = np.clip(agent.act(state, rng_agent, explore=True), -1.0, 1.0)
            rec = _step_env(env, state, action, rng_env, t_ep, skip)
            buf.add(rec)
            done = rec.terminal | rec.truncated
            t_ep = np.where(done, 0, t_ep + 1)
            state = rec.next_state
            if done.any():
                state = np.where(done[:, None], env.reset(rng_env, n), state)
            prev = frame
            frame += n * skip
            steps += 1
            if frame >= tr["warmup"] and len(buf) >= tr["batch_size"] and steps % tr["update_every"] == 0:
                for _ in range(tr["updates_per_step"] * tr["update_every"] * n):
                    self.record(self.safe_update(buf.sample(tr["batch_size"], rng_agent)))
            if hasattr(agent, "periodic") and frame >= tr["warmup"] and frame // alpha_every > prev // alpha_every:
                self.record(agent.periodic(buf, frame, rng_agent))
            self.maybe_eval(frame)
        return frame

    def _run_offline(self, buf):
        tr = self.cfg["train"]
        rng = self.streams["agent"]
        step = 0
        while step < self.cfg["frames"] and not self.stopped:
            self.record(self.safe_update(buf.sample(tr["batch_size"], rng)))
            step += 1
            self.maybe_eval(step)
        return step

    # on-policy ----------------------------------------------------------------
    def run_on_policy(self):
        cfg, env, agent = self.cfg, self.env, self.agent
        pg, n, skip = cfg["pg"], cfg["env"]["num_envs"], cfg["env"]["frame_skip"]
        gamma = cfg["train"]["gamma"]
        rng_env, rng_agent = self.streams["env"], self.streams["agent"]
        state = env.reset(rng_env, n)
        t_ep = np.zeros(n, dtype=int)
        frame = 0
        while frame < cfg["frames"] and not self.stopped:
            roll = RolloutBuffer(gamma, pg["gae_lambda"], pg["normalize_advantages"])
            for _ in range(pg["rollout_length"]):
                action, extras = agent.act_with_record(state, rng_agent)
                rec = _step_env(env, state, action, rng_env, t_ep, skip)
                reward = rec.reward.copy()
                cut = rec.truncated & ~rec.terminal
                if cut.any():
                    reward = reward + gamma * np.where(cut, agent.values(rec.next_state), 0.0)
                done = rec.terminal | rec.truncated
                roll.add(state, action, reward, agent.values(state), done, **extras)
                t_ep = np.where(done, 0, t_ep + 1)
                state = rec.next_state
                if done.any():
                    state = np.where(done[:, None], env.reset(rng_env, n), state)
                frame += n * skip
                if frame >= cfg["frames"]:
                    break
            roll.finalize(agent.values(state))
            self.record(self.safe_update(roll.flat()))
            self.maybe_eval(frame)
        return frame


def train(cfg, run_dir=None):
    """Run one configuration end to end and return its run directory."""
    cfg = make_config(base=cfg)
    run_dir = Path(run_dir) if run_dir is not None else run_dir_for(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, run_dir / "config.yaml")
    if cfg["frames"] == 0:
        return run_dir
    trainer = _Trainer(cfg, run_dir)
    frame = trainer.run_on_policy() if trainer.agent.on_policy else trainer.run_off_policy()
    if frame != trainer.metrics.last_frame:
        trainer.maybe_eval(frame, force=True)
    return run_dir
