"""Command line: train, eval, profile, sweep, gen-dataset."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..envsim import generate_dataset, make_env, uniform_behavior, write_dataset
from .analysis import RETURN_RANGES, performance_profile, plot_curves, plot_profile, sweep
from .config import ConfigError, load_config, make_config, parse_value
from .runner import RunAborted, evaluate, load_checkpoint, metric_curve, train


def _config(args):
    if args.config:
        return load_config(args.config, args.set)
    return make_config(sets=args.set)


def cmd_train(args):
    cfg = _config(args)
    run_dir = train(cfg, args.run_dir)
    print(run_dir)
    return 0


def cmd_eval(args):
    agent, manifest = load_checkpoint(args.checkpoint)
    if args.bon is not None:
        agent.cfg["eval"]["bon_n"] = args.bon
    env = make_env(args.env or manifest["env_id"])
    mean, std = evaluate(agent, env, args.episodes, np.random.default_rng(args.seed))
    print(json.dumps({"mean": mean, "std": std, "episodes": args.episodes}))
    return 0


def _final_return(run_dir):
    import yaml

    cfg = yaml.safe_load((Path(run_dir) / "config.yaml").read_text())
    _, r = metric_curve(Path(run_dir) / "metrics.csv")
    if len(r) == 0:
        raise ValueError(f"run {run_dir} has no evaluation rows")
    return cfg["env"]["id"], float(r[-1])


def cmd_profile(args):
    runs = [_final_return(d) for d in args.runs]
    taus = np.linspace(0.0, 1.0, args.points)
    frac = performance_profile(runs, taus, RETURN_RANGES)
    if args.out:
        plot_profile(taus, {"runs": frac}, args.out)
    for t, f in zip(taus, frac):
        print(f"{t:.3f},{f:.4f}")
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    values = [parse_value(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    res = sweep(cfg, args.axis, values, seeds, args.out, args.workers, args.metric)
    plot_curves(res, Path(args.out) / f"sweep_{args.axis}.png", title=args.axis, ylabel=args.metric, label=args.axis)
    for v, r in res.items():
        finals = np.asarray(r["final"])
        print(f"{args.axis}={v}: final {args.metric} {finals.mean():.4f} +- {finals.std():.4f}")
    return 0


def cmd_gen_dataset(args):
    env = make_env(args.env)
    rng = np.random.default_rng(args.seed)
    rec = generate_dataset(env, uniform_behavior(env), args.count, rng)
    bin_path, meta_path = write_dataset(args.out, rec, args.env, {"behavior": "uniform", "seed": args.seed})
    print(json.dumps({"count": args.count, "data": str(bin_path), "meta": str(meta_path)}))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dprl", description="Diffusion-policy RL experiments on toy control tasks.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="YAML file of nested overrides")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, repeatable")

    t = sub.add_parser("train", help="run one configuration")
    with_config(t)
    t.add_argument("--run-dir", help="output directory (default: $DPRL_RUN_ROOT/<name>)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint directory")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--env", help="override the env id stored in the checkpoint")
    e.add_argument("--bon", type=int, help="Best-of-N action selection at evaluation")
    e.set_defaults(fn=cmd_eval)

    pr = sub.add_parser("profile", help="performance profile over finished runs")
    pr.add_argument("runs", nargs="+")
    pr.add_argument("--points", type=int, default=21)
    pr.add_argument("--out", help="image path; a CSV is written next to it")
    pr.set_defaults(fn=cmd_profile)

    s = sub.add_parser("sweep", help="train across values of one config key")
    with_config(s)
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma separated")
    s.add_argument("--seeds", default="0")
    s.add_argument("--out", default="runs/sweep")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--metric", default="eval_return")
    s.set_defaults(fn=cmd_sweep)

    g = sub.add_parser("gen-dataset", help="write an offline dataset from a uniform behavior policy")
    g.add_argument("--env", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_dataset)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, RunAborted, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
