"""Fit a conditional score field to a two-mode 2D Gaussian mixture and sample it back.

Run: python demos/gmm_score_matching.py --steps 6000
Writes gmm_samples.png next to the working directory.
"""
import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dprl.genmodel import NoiseSchedule, SamplerConfig, ScoreField, sample, score_matching_loss
from dprl.tensornet import Optimizer, optimizer_step

MEANS = np.array([[-0.5, 0.0], [0.5, 0.0]])
SD = 0.15


def draw(rng, n):
    return MEANS[rng.integers(0, 2, n)] + SD * rng.standard_normal((n, 2))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=6000)
    ap.add_argument("--out", default="gmm_samples.png")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    field = ScoreField.create(2, 1, hidden=(64, 64), activation="mish", embed_dim=16, head="velocity", rng=rng)
    schedule = NoiseSchedule("cosine")
    opt = Optimizer("adam", 2e-3)
    cond = np.ones((256, 1))
    for i in range(args.steps):
        loss, g = score_matching_loss(field, (cond, draw(rng, 256)), schedule, rng)
        field.net.params = optimizer_step(opt, field.net.params, g)
        if i % 1000 == 0:
            print(f"step {i:5d}  loss {loss:.4f}")

    x, _ = sample(field, np.ones((1, 1)), schedule, SamplerConfig(50, 1.0, "sde"), rng, n=5000)
    fig, ax = plt.subplots(1, 2, figsize=(8, 4), sharex=True, sharey=True)
    ax[0].scatter(*draw(rng, 5000).T, s=1)
    ax[0].set_title("data")
    ax[1].scatter(*x.T, s=1, color="C1")
    ax[1].set_title("reverse SDE, 50 steps")
    ax[0].set_xlim(-1, 1)
    ax[0].set_ylim(-1, 1)
    fig.savefig(args.out, dpi=120)
    print("wrote", args.out)


if __name__ == "__main__":
    main()
