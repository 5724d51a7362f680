"""Gradient-norm-imbalance experiment.

Trains three banked configurations on one synthetic task and compares the
post-clip passage/query gradient-norm ratio trajectories:

  * passage-only bank (the ratio drifts far above 1),
  * dual bank (the ratio stays near 1),
  * dual bank with the query side switched off mid-run (the ratio jumps).

Writes ratio_trajectories.csv and grad_norm_imbalance.svg under --out.
"""

import argparse
import os

import numpy as np

from contrastlab import data, encoder
from contrastlab.numerics import make_rng
from contrastlab.strategies import StrategyConfig
from contrastlab.trainer import (
    ENC_P_STREAM,
    ENC_Q_STREAM,
    TASK_STREAM,
    TrainConfig,
    run_training,
)


def per_update_ratios(log):
    seen = {}
    for s in log.step_stats:
        seen.setdefault(s.step, s.grad_norm_ratio)
    return [seen[u] for u in sorted(seen)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/imbalance")
    ap.add_argument("--updates", type=int, default=400)
    ap.add_argument("--n-memory", type=int, default=128)
    ap.add_argument("--disable-at", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--task-seed", type=int, default=2000)
    ap.add_argument("--peak-lr", type=float, default=4e-3)
    args = ap.parse_args()

    task = data.generate_task(make_rng(args.task_seed, TASK_STREAM), 16, 32, 512, 4096, 0.2)
    mem = args.n_memory
    base = dict(n_local=8, accum_steps=4)
    runs = {
        "passage-only bank": dict(kind="prebatch", n_memory_p=mem, **base),
        "dual bank": dict(kind="contaccum", n_memory_q=mem, n_memory_p=mem, **base),
        f"dual bank, query side off at {args.disable_at}": dict(
            kind="contaccum", n_memory_q=mem, n_memory_p=mem,
            disable_query_bank_at_step=args.disable_at, **base,
        ),
    }

    trajectories = {}
    for label, kwargs in runs.items():
        enc_q = encoder.init(make_rng(args.seed, ENC_Q_STREAM), "mlp", 32, 32, hidden=64)
        enc_p = encoder.init(make_rng(args.seed, ENC_P_STREAM), "mlp", 32, 32, hidden=64)
        log = run_training(
            task, enc_q, enc_p, StrategyConfig(**kwargs),
            TrainConfig(total_steps=args.updates, seed=args.seed, peak_lr=args.peak_lr),
        )
        trajectories[label] = per_update_ratios(log)
        tail = [r for r in trajectories[label][args.updates * 3 // 4 :] if r is not None]
        print(f"{label:<42} final-quarter median ratio {np.median(tail):8.3f}")

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "ratio_trajectories.csv")
    labels = list(trajectories)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("update," + ",".join(f'"{l}"' for l in labels) + "\n")
        for u in range(args.updates):
            row = [str(u)] + [
                "" if trajectories[l][u] is None else repr(trajectories[l][u]) for l in labels
            ]
            fh.write(",".join(row) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for label in labels:
        ys = trajectories[label]
        xs = [u for u, r in enumerate(ys) if r is not None]
        ax.plot(xs, [ys[u] for u in xs], lw=1.0, label=label)
    ax.axvline(args.disable_at, color="grey", lw=0.6, ls=":")
    ax.axhline(1.0, color="grey", lw=0.6, ls="--")
    ax.set_yscale("log")
    ax.set_xlabel("update")
    ax.set_ylabel("passage/query gradient-norm ratio (post-clip)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    svg = os.path.join(args.out, "grad_norm_imbalance.svg")
    fig.savefig(svg)
    print(f"wrote {csv_path} and {svg}")


if __name__ == "__main__":
    main()
