"""Similarity mass by representation age.

Runs dual-bank accumulation with per-substep similarity-mass logging and
charts how much softmax probability mass current queries place on banked
passages of each age, next to the in-batch (age 0) block. Past
representations holding mass comparable to fresh ones is what makes the
banks useful from early training on.
"""

import argparse
import os
from collections import defaultdict

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
from contrastlab.cli import write_sim_mass_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/simmass")
    ap.add_argument("--updates", type=int, default=200)
    ap.add_argument("--n-memory", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--task-seed", type=int, default=2000)
    ap.add_argument("--max-age", type=int, default=8, help="oldest bucket to chart")
    args = ap.parse_args()

    task = data.generate_task(make_rng(args.task_seed, TASK_STREAM), 16, 32, 512, 4096, 0.2)
    enc_q = encoder.init(make_rng(args.seed, ENC_Q_STREAM), "mlp", 32, 32, hidden=64)
    enc_p = encoder.init(make_rng(args.seed, ENC_P_STREAM), "mlp", 32, 32, hidden=64)
    cfg = StrategyConfig(
        kind="contaccum", n_local=8, accum_steps=4,
        n_memory_q=args.n_memory, n_memory_p=args.n_memory, log_sim_mass=True,
    )
    log = run_training(
        task, enc_q, enc_p, cfg,
        TrainConfig(total_steps=args.updates, seed=args.seed, peak_lr=4e-3),
    )

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "simmass.csv")
    write_sim_mass_csv(csv_path, log.sim_mass_rows)

    # every bucket here is one enqueued local batch of 8 rows (and age 0 is the
    # 8 in-batch passages), so raw bucket masses are directly comparable
    per_item = defaultdict(lambda: defaultdict(list))
    for step, substep, age, raw, soft in log.sim_mass_rows:
        per_item[age][step].append(soft)
    ages = [a for a in sorted(per_item) if a <= args.max_age]

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for age in ages:
        steps = sorted(per_item[age])
        ys = [float(np.mean(per_item[age][s])) for s in steps]
        ax.plot(steps, ys, lw=1.0, label=f"age {age}" + (" (in-batch)" if age == 0 else ""))
    ax.set_xlabel("update")
    ax.set_ylabel("softmax mass per 8-passage bucket")
    ax.set_yscale("log")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    svg = os.path.join(args.out, "sim_mass_by_age.svg")
    fig.savefig(svg)

    last = max(s for s, *_ in log.sim_mass_rows)
    final = {age: soft for s, k, age, raw, soft in log.sim_mass_rows if s == last and k == 3}
    print("final-substep softmax mass by age:")
    for age in sorted(final):
        print(f"  age {age:>2}: {final[age]:.4f}")
    print(f"wrote {csv_path} and {svg}")


if __name__ == "__main__":
    main()
