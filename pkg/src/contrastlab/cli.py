"""Experiment runner and report generator.

Configs are flat ``key=value`` documents (UTF-8, ``#`` starts a full-line
comment, every key optional). Keys, types and defaults:

  strategy                    str   fullbatch | gradaccum | gradcache | prebatch | contaccum (fullbatch)
  n_local                     int   local batch size (8)
  accum_steps                 int   accumulation steps per update (1)
  n_memory_q                  int   query bank capacity (0)
  n_memory_p                  int   passage bank capacity (0)
  tau                         float similarity temperature (1.0)
  use_hard_negatives          bool  sample one mined hard negative per query (false)
  enable_bank_after_step      int?  prebatch bank activation gate, none = active from start (none)
  disable_query_bank_at_step  int?  one-way query-bank switch-off update (none)
  bank_same_update_only       bool  clear the bank at every update start (false)
  log_sim_mass                bool  write simmass.csv with per-age similarity mass (false)
  encoder                     str   linear | mlp (mlp)
  d_model                     int   representation width (32)
  hidden_dim                  int   mlp hidden width (64)
  latent_dim                  int   task latent width (16)
  d_in                        int   task input width (32)
  n_train                     int   training pairs (256)
  n_corpus                    int   corpus passages incl. positives (1024)
  noise_std                   float task view noise (0.1)
  latent_shift                float common latent displacement, makes representations anisotropic (0.0)
  task_seed                   int?  task generation seed, none = use seed (none)
  peak_lr                     float schedule peak (1e-3)
  warmup_steps                int?  none = 5% of total_steps (none)
  total_steps                 int   optimizer updates (200)
  clip_norm                   float per-encoder gradient clip (2.0)
  beta1, beta2                float Adam betas (0.9, 0.999)
  adam_eps                    float Adam epsilon (1e-8)
  weight_decay                float decoupled weight decay (0.0)
  eval_every                  int   0 = evaluate only after the final update (0)
  seed                        int   run seed: encoder init + batch order (0)
  out                         str   output directory (runs/out)

Bank-capacity keys are ignored by strategies that do not read a bank, which
keeps mixed-strategy sweeps expressible. In a ``sweep`` config any value
containing commas is a grid axis. Evaluation cutoffs are fixed by the
eval.csv schema (top@1/5/20, recall@20, ndcg@10/20).

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import dataclass

from . import checks, data, encoder
from .instrumentation import StepStats, aggregate
from .numerics import make_rng
from .strategies import KINDS, StrategyConfig
from .trainer import (
    BATCH_STREAM,
    ENC_P_STREAM,
    ENC_Q_STREAM,
    TASK_STREAM,
    EvalRecord,
    MetricsLog,
    TrainConfig,
    run_training,
)

METRICS_COLUMNS = (
    "step", "substep", "strategy", "loss",
    "grad_norm_q_pre", "grad_norm_p_pre", "grad_norm_q_post", "grad_norm_p_post",
    "grad_norm_ratio", "negatives_per_query", "bank_fill_q", "bank_fill_p",
    "bank_bytes", "fwd_passes_cum", "bwd_passes_cum", "lr",
)
EVAL_COLUMNS = ("step", "top1", "top5", "top20", "recall20", "ndcg10", "ndcg20")
SIM_MASS_COLUMNS = ("step", "substep", "age", "mass_raw", "mass_softmax")


class ConfigError(ValueError):
    pass


def _parse_bool(value: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_opt_int(value: str):
    if value.lower() in ("none", ""):
        return None
    return int(value)


# key -> (parser, default)
KEY_TABLE: dict = {
    "strategy": (str, "fullbatch"),
    "n_local": (int, 8),
    "accum_steps": (int, 1),
    "n_memory_q": (int, 0),
    "n_memory_p": (int, 0),
    "tau": (float, 1.0),
    "use_hard_negatives": (_parse_bool, False),
    "enable_bank_after_step": (_parse_opt_int, None),
    "disable_query_bank_at_step": (_parse_opt_int, None),
    "bank_same_update_only": (_parse_bool, False),
    "log_sim_mass": (_parse_bool, False),
    "encoder": (str, "mlp"),
    "d_model": (int, 32),
    "hidden_dim": (int, 64),
    "latent_dim": (int, 16),
    "d_in": (int, 32),
    "n_train": (int, 256),
    "n_corpus": (int, 1024),
    "noise_std": (float, 0.1),
    "latent_shift": (float, 0.0),
    "task_seed": (_parse_opt_int, None),
    "peak_lr": (float, 1e-3),
    "warmup_steps": (_parse_opt_int, None),
    "total_steps": (int, 200),
    "clip_norm": (float, 2.0),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "adam_eps": (float, 1e-8),
    "weight_decay": (float, 0.0),
    "eval_every": (int, 0),
    "seed": (int, 0),
    "out": (str, "runs/out"),
}


def parse_raw_pairs(text: str) -> dict[str, str]:
    """key=value lines to a dict; unknown and duplicate keys are rejected."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEY_TABLE:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        pairs[key] = value
    return pairs


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError as exc:  # pragma: no cover - programming error
            raise AttributeError(key) from exc

    def strategy_config(self) -> StrategyConfig:
        v = self.values
        try:
            return StrategyConfig(
                kind=v["strategy"],
                n_local=v["n_local"],
                accum_steps=v["accum_steps"],
                n_memory_q=v["n_memory_q"] if v["strategy"] in ("prebatch", "contaccum") else 0,
                n_memory_p=v["n_memory_p"] if v["strategy"] in ("prebatch", "contaccum") else 0,
                tau=v["tau"],
                use_hard_negatives=v["use_hard_negatives"],
                enable_bank_after_step=v["enable_bank_after_step"],
                disable_query_bank_at_step=v["disable_query_bank_at_step"],
                bank_same_update_only=v["bank_same_update_only"],
                log_sim_mass=v["log_sim_mass"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(
                peak_lr=v["peak_lr"],
                warmup_steps=v["warmup_steps"],
                total_steps=v["total_steps"],
                clip_norm=v["clip_norm"],
                beta1=v["beta1"],
                beta2=v["beta2"],
                adam_eps=v["adam_eps"],
                weight_decay=v["weight_decay"],
                seed=v["seed"],
                eval_every=v["eval_every"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_task(self) -> data.SyntheticTask:
        v = self.values
        task_seed = v["task_seed"] if v["task_seed"] is not None else v["seed"]
        task = data.generate_task(
            make_rng(task_seed, TASK_STREAM),
            v["latent_dim"], v["d_in"], v["n_train"], v["n_corpus"],
            v["noise_std"], v["latent_shift"],
        )
        if v["use_hard_negatives"]:
            task = data.mine_hard_negatives(task)
        return task

    def build_encoders(self):
        v = self.values
        hidden = v["hidden_dim"] if v["encoder"] == "mlp" else None
        enc_q = encoder.init(make_rng(v["seed"], ENC_Q_STREAM), v["encoder"], v["d_in"], v["d_model"], hidden)
        enc_p = encoder.init(make_rng(v["seed"], ENC_P_STREAM), v["encoder"], v["d_in"], v["d_model"], hidden)
        return enc_q, enc_p


def build_config(pairs: dict[str, str]) -> ExperimentConfig:
    """Typed, validated config from raw string pairs; omitted keys use defaults."""
    values = {}
    for key, (parse, default) in KEY_TABLE.items():
        if key in pairs:
            try:
                values[key] = parse(pairs[key])
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from exc
        else:
            values[key] = default
    if values["strategy"] not in KINDS:
        raise ConfigError(f"key 'strategy': must be one of {KINDS}, got {values['strategy']!r}")
    if values["encoder"] not in ("linear", "mlp"):
        raise ConfigError(f"key 'encoder': must be linear or mlp, got {values['encoder']!r}")
    for key in ("n_local", "accum_steps", "d_model", "hidden_dim", "latent_dim", "d_in", "n_train", "n_corpus"):
        if values[key] < 1:
            raise ConfigError(f"key {key!r}: must be >= 1, got {values[key]}")
    for key in ("n_memory_q", "n_memory_p", "eval_every", "total_steps"):
        if values[key] < 0:
            raise ConfigError(f"key {key!r}: must be >= 0, got {values[key]}")
    if values["seed"] < 0 or (values["task_seed"] is not None and values["task_seed"] < 0):
        raise ConfigError("key 'seed'/'task_seed': must be >= 0")
    if values["tau"] <= 0:
        raise ConfigError(f"key 'tau': must be positive, got {values['tau']}")
    n_total = values["n_local"] * values["accum_steps"]
    if values["n_train"] < n_total:
        raise ConfigError(
            f"key 'n_train': must be >= n_local * accum_steps = {n_total}, got {values['n_train']}"
        )
    if values["n_corpus"] < values["n_train"]:
        raise ConfigError(
            f"key 'n_corpus': must be >= n_train ({values['n_train']}), got {values['n_corpus']}"
        )
    cfg = ExperimentConfig(values)
    cfg.strategy_config()  # surfaces strategy invariant violations at parse time
    cfg.train_config()
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    return build_config(parse_raw_pairs(text))


# ------------------------------------------------------------- serialisation


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, stats: list[StepStats]) -> None:
    lines = [",".join(METRICS_COLUMNS)]
    for s in stats:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    s.step, s.substep, s.strategy, s.loss,
                    s.grad_norm_q_pre, s.grad_norm_p_pre,
                    s.grad_norm_q_post, s.grad_norm_p_post,
                    s.grad_norm_ratio, s.negatives_per_query,
                    s.bank_fill_q, s.bank_fill_p, s.bank_bytes,
                    s.fwd_passes_cum, s.bwd_passes_cum, s.lr,
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics_csv(path) -> list[StepStats]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != METRICS_COLUMNS:
        raise ValueError(f"{path} does not carry the metrics.csv schema")
    opt_float = lambda s: None if s == "" else float(s)
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append(
            StepStats(
                step=int(f[0]), substep=int(f[1]), strategy=f[2], loss=float(f[3]),
                grad_norm_q_pre=opt_float(f[4]), grad_norm_p_pre=opt_float(f[5]),
                grad_norm_q_post=opt_float(f[6]), grad_norm_p_post=opt_float(f[7]),
                grad_norm_ratio=opt_float(f[8]), negatives_per_query=int(f[9]),
                bank_fill_q=int(f[10]), bank_fill_p=int(f[11]), bank_bytes=int(f[12]),
                fwd_passes_cum=int(f[13]), bwd_passes_cum=int(f[14]), lr=opt_float(f[15]),
            )
        )
    return out


def write_eval_csv(path, records: list[EvalRecord]) -> None:
    lines = [",".join(EVAL_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(_fmt(v) for v in (r.step, r.top1, r.top5, r.top20, r.recall20, r.ndcg10, r.ndcg20))
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_eval_csv(path) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != EVAL_COLUMNS:
        raise ValueError(f"{path} does not carry the eval.csv schema")
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append(EvalRecord(int(f[0]), *(float(x) for x in f[1:])))
    return out


def write_sim_mass_csv(path, rows) -> None:
    lines = [",".join(SIM_MASS_COLUMNS)]
    for step, substep, age, raw, soft in rows:
        lines.append(",".join(_fmt(v) for v in (step, substep, age, raw, soft)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_config_echo(path, cfg: ExperimentConfig) -> None:
    lines = [f"{key}={_fmt(cfg.values[key])}" for key in KEY_TABLE]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- subcommands


def run_train(cfg: ExperimentConfig, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    task = cfg.build_task()
    enc_q, enc_p = cfg.build_encoders()
    log = run_training(task, enc_q, enc_p, cfg.strategy_config(), cfg.train_config())
    write_config_echo(os.path.join(out_dir, "config.txt"), cfg)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), log.step_stats)
    write_eval_csv(os.path.join(out_dir, "eval.csv"), log.eval_records)
    if cfg.values["log_sim_mass"]:
        write_sim_mass_csv(os.path.join(out_dir, "simmass.csv"), log.sim_mass_rows)
    summary = _summarise(cfg, log)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if log.aborted:
        print(f"train aborted: {log.abort_message}", file=sys.stderr)
        return 2
    final = log.eval_records[-1] if log.eval_records else None
    if final is not None:
        print(
            f"done: {cfg.values['strategy']} {cfg.values['total_steps']} updates, "
            f"top@5={final.top5:.4f} ndcg@10={final.ndcg10:.4f} -> {out_dir}"
        )
    else:
        print(f"done: empty run -> {out_dir}")
    return 0


def _summarise(cfg: ExperimentConfig, log: MetricsLog) -> dict:
    summary = {
        "strategy": cfg.values["strategy"],
        "updates_run": len({s.step for s in log.step_stats}),
        "aborted": log.aborted,
        "abort_message": log.abort_message,
    }
    if log.step_stats:
        last = log.step_stats[-1]
        summary["final_loss"] = last.loss
        summary["forward_passes"] = last.fwd_passes_cum
        summary["backward_passes"] = last.bwd_passes_cum
        tail = aggregate(log.step_stats, window=0.25)[cfg.values["strategy"]]
        summary["tail_ratio_median"] = tail["ratio_median"]
        summary["tail_loss_mean"] = tail["loss_mean"]
    if log.eval_records:
        r = log.eval_records[-1]
        summary["final_eval"] = {
            "step": r.step, "top1": r.top1, "top5": r.top5, "top20": r.top20,
            "recall20": r.recall20, "ndcg10": r.ndcg10, "ndcg20": r.ndcg20,
        }
    return summary


def _print_check_table(title: str, results) -> int:
    print(title)
    worst_fail = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"  {r.name:<64} {r.value:>12.3e}  (tol {r.tolerance:g})  {status}")
        if not r.passed:
            worst_fail += 1
    print(f"{len(results) - worst_fail}/{len(results)} checks passed")
    return 0 if worst_fail == 0 else 2


def run_gradcheck_cmd(cfg: ExperimentConfig) -> int:
    return _print_check_table("finite-difference suites", checks.run_gradcheck(cfg.values["seed"]))


def run_equivalence_cmd(cfg: ExperimentConfig) -> int:
    return _print_check_table("strategy equivalences", checks.run_equivalence(cfg.values["seed"]))


def _sanitise(value: str) -> str:
    return "".join(c if c.isalnum() or c in ".-" else "-" for c in value)


def _sweep_point(args):
    pairs, out_dir = args
    cfg = build_config(pairs)
    return run_train(cfg, out_dir)


def run_sweep(pairs: dict[str, str], out_dir: str, jobs: int) -> int:
    axes = {k: [v.strip() for v in raw.split(",")] for k, raw in pairs.items() if "," in raw}
    fixed = {k: v for k, v in pairs.items() if k not in axes}
    points: list[tuple[dict, str]] = []
    combos = [{}]
    for key, options in axes.items():
        combos = [{**c, key: opt} for c in combos for opt in options]
    for i, combo in enumerate(combos):
        label = "__".join(f"{k}={_sanitise(v)}" for k, v in combo.items())
        sub = os.path.join(out_dir, f"point_{i:03d}" + (f"__{label}" if label else ""))
        merged = {**fixed, **combo}
        build_config(merged)  # fail fast on any invalid grid point
        points.append((merged, sub))
    os.makedirs(out_dir, exist_ok=True)
    manifest = [",".join(["point_dir"] + list(axes))]
    for merged, sub in points:
        manifest.append(",".join([os.path.basename(sub)] + [merged[k] for k in axes]))
    with open(os.path.join(out_dir, "sweep_manifest.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest) + "\n")
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_sweep_point, points))
    else:
        codes = [_sweep_point(p) for p in points]
    print(f"sweep finished: {len(points)} points -> {out_dir}")
    return max(codes) if codes else 0


def _per_update(stats: list[StepStats]):
    """(steps, mean loss per update, ratio per update) from substep rows."""
    by_step: dict[int, list[StepStats]] = {}
    for s in stats:
        by_step.setdefault(s.step, []).append(s)
    steps = sorted(by_step)
    losses = [sum(r.loss for r in by_step[u]) / len(by_step[u]) for u in steps]
    ratios = [by_step[u][0].grad_norm_ratio for u in steps]
    return steps, losses, ratios


def run_report(out_dir: str) -> int:
    metrics_path = os.path.join(out_dir, "metrics.csv")
    eval_path = os.path.join(out_dir, "eval.csv")
    if not os.path.exists(metrics_path):
        print(f"no metrics.csv under {out_dir}", file=sys.stderr)
        return 2
    stats = read_metrics_csv(metrics_path)
    evals = read_eval_csv(eval_path) if os.path.exists(eval_path) else []
    report_dir = os.path.join(out_dir, "report")
    os.makedirs(report_dir, exist_ok=True)

    lines = ["run report", f"rows: {len(stats)}  updates: {len({s.step for s in stats})}"]
    if stats:
        summary = aggregate(stats, window=0.25)
        for strategy, agg in summary.items():
            ratio = "n/a" if agg["ratio_median"] is None else f"{agg['ratio_median']:.4f}"
            lines.append(
                f"{strategy}: tail loss mean {agg['loss_mean']:.4f}, "
                f"tail ratio median {ratio}"
            )
    for r in evals:
        lines.append(
            f"eval@{r.step}: top1={r.top1:.4f} top5={r.top5:.4f} top20={r.top20:.4f} "
            f"ndcg10={r.ndcg10:.4f}"
        )
    text = "\n".join(lines) + "\n"
    with open(os.path.join(report_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps, losses, ratios = _per_update(stats) if stats else ([], [], [])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, losses, lw=1.0)
    ax.set_xlabel("update")
    ax.set_ylabel("loss")
    fig.tight_layout()
    fig.savefig(os.path.join(report_dir, "loss.svg"))
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    defined = [(u, r) for u, r in zip(steps, ratios) if r is not None]
    if defined:
        ax.plot([u for u, _ in defined], [r for _, r in defined], lw=1.0)
        ax.axhline(1.0, color="grey", lw=0.6, ls="--")
        ax.set_yscale("log")
    ax.set_xlabel("update")
    ax.set_ylabel("grad norm ratio (post-clip)")
    fig.tight_layout()
    fig.savefig(os.path.join(report_dir, "grad_norm_ratio.svg"))
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    if evals:
        xs = [r.step for r in evals]
        for label, ys in (
            ("top@1", [r.top1 for r in evals]),
            ("top@5", [r.top5 for r in evals]),
            ("top@20", [r.top20 for r in evals]),
        ):
            ax.plot(xs, ys, marker="o", ms=3, lw=1.0, label=label)
        ax.legend()
    ax.set_xlabel("update")
    ax.set_ylabel("retrieval accuracy")
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(os.path.join(report_dir, "topk.svg"))
    plt.close(fig)
    return 0


# ----------------------------------------------------------------- dispatch


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="contrastlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, helptext in (
        ("train", "run one training experiment and write CSV artifacts"),
        ("gradcheck", "finite-difference suites for every gradient path"),
        ("equivalence", "strategy-equivalence lattice checks"),
        ("sweep", "grid over comma-separated config values"),
        ("report", "summary tables and SVG charts from existing CSVs"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--out", help="output directory (overrides the config key)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, repeatable")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="concurrent grid points")
    return parser


def _collect_pairs(args) -> dict[str, str]:
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    pairs = parse_raw_pairs(text)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in KEY_TABLE:
            raise ConfigError(f"unknown key {key!r} in --set")
        pairs[key] = value.strip()
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    if args.out is not None:
        pairs["out"] = args.out
    return pairs


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        pairs = _collect_pairs(args)
        if args.subcommand == "sweep":
            probe = dict(pairs)
            out_dir = probe.pop("out", KEY_TABLE["out"][1])
            return run_sweep(probe, out_dir, jobs=args.jobs)
        cfg = build_config(pairs)
        if args.subcommand == "train":
            return run_train(cfg, cfg.values["out"])
        if args.subcommand == "gradcheck":
            return run_gradcheck_cmd(cfg)
        if args.subcommand == "equivalence":
            return run_equivalence_cmd(cfg)
        if args.subcommand == "report":
            return run_report(cfg.values["out"])
        raise AssertionError(args.subcommand)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
