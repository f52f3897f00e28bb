"""Train SAC and the DACER diffusion actor on pendulum through the harness, then plot both.

Equivalent CLI for one run:
    dprl train --set algo=dacer --set frames=10000 --set diffusion.steps=10 --run-dir runs/dacer

Run: python demos/pendulum_curves.py --frames 10000 --seeds 0 1
"""
import argparse

from dprl.harness import make_config, metric_curve, train
from dprl.harness.analysis import aggregate, plot_curves

SMALL = ["train.warmup=1000", "eval.interval=2000", "eval.episodes=5", "critic.hidden=[64,64]",
         "actor.gaussian_hidden=[64,64]", "actor.hidden=[64,64]", "actor.embed_dim=16", "diffusion.steps=10"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=10_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--root", default="runs/pendulum_demo")
    args = ap.parse_args()

    results = {}
    for algo in ("sac", "dacer"):
        curves = []
        for seed in args.seeds:
            cfg = make_config(sets=[f"algo={algo}", f"seed={seed}", f"frames={args.frames}", *SMALL])
            run = train(cfg, f"{args.root}/{algo}_{seed}")
            curves.append(metric_curve(run / "metrics.csv"))
            print(algo, seed, "final return", round(float(curves[-1][1][-1]), 1))
        x, mean, std = aggregate(curves)
        results[algo] = {"frames": x, "mean": mean, "std": std}
    out = plot_curves(results, f"{args.root}/returns.png", title="pendulum", label="algo")
    print("wrote", out)


if __name__ == "__main__":
    main()
