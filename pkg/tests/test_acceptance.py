"""End-to-end acceptance suite.

Each test covers one numbered criterion, asserts it at its stated tolerance,
and prints one pass line (run with ``pytest -s`` to see them). Criteria 6 and
7 are qualitative reproductions of the training-dynamics effects on a frozen
synthetic task; the exact-oracle criteria pin their tolerances directly.
"""

import math
import time

import numpy as np
import pytest

from contrastlab import data, encoder, loss
from contrastlab.cli import main
from contrastlab.data import Batch
from contrastlab.membank import DualMemoryBank, byte_usage
from contrastlab.numerics import empty_mat, gaussian, make_rng
from contrastlab.strategies import (
    StrategyConfig,
    negative_count,
    run_step,
    step_contaccum,
    step_full_batch,
    step_grad_accum,
    step_grad_cache,
    step_prebatch,
    surpasses_total,
)
from contrastlab.instrumentation import sim_mass
from contrastlab.trainer import (
    ENC_P_STREAM,
    ENC_Q_STREAM,
    TASK_STREAM,
    TrainConfig,
    run_training,
)

# frozen experiment geometry for the dynamics criteria (6-8)
TASK_SEED = 2000
LATENT, D_IN, D_MODEL, HIDDEN = 16, 32, 32, 64
N_TRAIN, N_CORPUS, NOISE = 512, 4096, 0.2
PEAK_LR = 4e-3


def _pass(n, msg):
    print(f"\ncriterion {n} PASS: {msg}")


def norm_rel(a, b):
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff / denom if denom > 1e-12 else diff


def grads_rel(ga, gb):
    return max(norm_rel(x, y) for x, y in zip(ga.arrays(), gb.arrays()))


def outcome_rel(a, b):
    return max(grads_rel(a.grad_q, b.grad_q), grads_rel(a.grad_p, b.grad_p))


def make_encoders(seed, kind="mlp", d_in=6, d_model=4, hidden=5):
    h = hidden if kind == "mlp" else None
    return (
        encoder.init(make_rng(seed, 1), kind, d_in, d_model, hidden=h),
        encoder.init(make_rng(seed, 2), kind, d_in, d_model, hidden=h),
    )


def make_batch(seed, n, d_in=6, with_hard=False):
    rng = make_rng(seed, 3)
    hard = gaussian(rng, n, d_in, 1.0) if with_hard else None
    return Batch(gaussian(rng, n, d_in, 1.0), gaussian(rng, n, d_in, 1.0), hard)


@pytest.fixture(scope="module")
def frozen_task():
    return data.generate_task(
        make_rng(TASK_SEED, TASK_STREAM), LATENT, D_IN, N_TRAIN, N_CORPUS, NOISE, 0.0
    )


def train(task, seed, strat_kwargs, updates, disable_at=None):
    enc_q = encoder.init(make_rng(seed, ENC_Q_STREAM), "mlp", D_IN, D_MODEL, hidden=HIDDEN)
    enc_p = encoder.init(make_rng(seed, ENC_P_STREAM), "mlp", D_IN, D_MODEL, hidden=HIDDEN)
    cfg = StrategyConfig(disable_query_bank_at_step=disable_at, **strat_kwargs)
    tcfg = TrainConfig(total_steps=updates, seed=seed, peak_lr=PEAK_LR)
    return run_training(task, enc_q, enc_p, cfg, tcfg)


def per_update_ratios(log):
    seen = {}
    for s in log.step_stats:
        seen.setdefault(s.step, s.grad_norm_ratio)
    return [seen[u] for u in sorted(seen) if seen[u] is not None]


# --------------------------------------------------------------- criterion 1


def test_criterion_1_representation_gradient_fidelity():
    t0 = time.time()
    h = 1e-6
    count, worst = 0, 0.0
    for n_bank in (0, 6):
        for tau in (0.5, 1.0, 2.0):
            for n_hard in (0, 4):
                for seed in range(9):
                    rng = make_rng(seed, 90, n_bank, n_hard, int(tau * 2))
                    q = gaussian(rng, 4, 8, 1.0)
                    p = gaussian(rng, 4, 8, 1.0)
                    bq = gaussian(rng, n_bank, 8, 1.0) if n_bank else empty_mat(8)
                    bp = gaussian(rng, n_bank, 8, 1.0) if n_bank else empty_mat(8)
                    hard = gaussian(rng, n_hard, 8, 1.0) if n_hard else None

                    def loss_of(qc, pc):
                        return loss.info_nce(loss.build_similarity(qc, pc, bq, bp, hard, tau))

                    view = loss.build_similarity(q, p, bq, bp, hard, tau)
                    p_all = np.vstack([p, bp] + ([hard] if hard is not None else []))
                    lg = loss.rep_gradients(view, np.vstack([q, bq]), p_all)
                    for target, analytic in ((q, lg.grad_q_cur), (p, lg.grad_p_cur)):
                        fd = np.zeros_like(target)
                        for j in range(target.size):
                            for sign in (+1.0, -1.0):
                                bumped = target.copy()
                                bumped.reshape(-1)[j] += sign * h
                                val = loss_of(bumped, p) if target is q else loss_of(q, bumped)
                                fd.reshape(-1)[j] += sign * val / (2 * h)
                        worst = max(worst, norm_rel(analytic, fd))
                    count += 1
    elapsed = time.time() - t0
    assert count >= 100
    assert worst <= 1e-6
    assert elapsed < 5.0
    _pass(1, f"{count} instances, max FD relative error {worst:.2e}, {elapsed:.2f}s")


# --------------------------------------------------------------- criterion 2


def test_criterion_2_gradcache_exactness():
    worst, count = 0.0, 0
    for kind in ("linear", "mlp"):
        for n_total in (8, 16, 32):
            for k in (2, 4):
                for seed in (0, 1):
                    enc_q, enc_p = make_encoders(seed + 10, kind)
                    batch = make_batch(seed + 20 + n_total + k, n_total)
                    fb = step_full_batch(
                        enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=n_total)
                    )
                    gc = step_grad_cache(
                        enc_q, enc_p, batch,
                        StrategyConfig(kind="gradcache", n_local=n_total // k, accum_steps=k),
                    )
                    worst = max(worst, outcome_rel(fb, gc))
                    count += 1
    assert count >= 20
    assert worst <= 1e-9
    _pass(2, f"{count} instances over both encoder kinds, max rel diff {worst:.2e}")


# --------------------------------------------------------------- criterion 3


def test_criterion_3_degenerate_equivalence_lattice():
    worst = {"ga": 0.0, "ca": 0.0, "pb": 0.0}
    for seed in range(10):
        enc_q, enc_p = make_encoders(seed + 30)
        batch = make_batch(seed + 40, 8)
        fb = step_full_batch(enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=8))
        ga = step_grad_accum(enc_q, enc_p, batch, StrategyConfig(kind="gradaccum", n_local=8))
        worst["ga"] = max(worst["ga"], outcome_rel(fb, ga))
        ca = step_contaccum(
            enc_q, enc_p, batch,
            StrategyConfig(kind="contaccum", n_local=8, n_memory_q=16, n_memory_p=16),
            DualMemoryBank(16, 16, 4),
        )
        worst["ca"] = max(worst["ca"], outcome_rel(fb, ca))
        ga2 = step_grad_accum(
            enc_q, enc_p, batch, StrategyConfig(kind="gradaccum", n_local=4, accum_steps=2)
        )
        pb = step_prebatch(
            enc_q, enc_p, batch,
            StrategyConfig(
                kind="prebatch", n_local=4, accum_steps=2, n_memory_p=16,
                enable_bank_after_step=100,
            ),
            DualMemoryBank(0, 16, 4),
        )
        worst["pb"] = max(worst["pb"], outcome_rel(ga2, pb))
    assert worst["ga"] <= 1e-12 and worst["ca"] <= 1e-12 and worst["pb"] <= 1e-12

    differing = 0
    for seed in range(20):
        enc_q, enc_p = make_encoders(seed + 50)
        batch = make_batch(seed + 70, 16)
        fb = step_full_batch(enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=16))
        ga = step_grad_accum(
            enc_q, enc_p, batch, StrategyConfig(kind="gradaccum", n_local=4, accum_steps=4)
        )
        if outcome_rel(fb, ga) > 1e-3:
            differing += 1
    assert differing >= 18
    _pass(
        3,
        f"degenerate diffs ga={worst['ga']:.1e} ca={worst['ca']:.1e} pb={worst['pb']:.1e}; "
        f"K=4 differs on {differing}/20 seeds",
    )


# --------------------------------------------------------------- criterion 4


def test_criterion_4_negative_count_accounting():
    assert negative_count(StrategyConfig(kind="fullbatch", n_local=128)) == 127
    assert negative_count(StrategyConfig(kind="gradaccum", n_local=8, accum_steps=16)) == 7
    ca_cfg = StrategyConfig(
        kind="contaccum", n_local=8, accum_steps=16, n_memory_q=128, n_memory_p=128
    )
    assert negative_count(ca_cfg, bank_fill=128) == 135
    assert surpasses_total(ca_cfg)  # 128 > 8 * 15
    boundary = StrategyConfig(
        kind="contaccum", n_local=8, accum_steps=16, n_memory_q=120, n_memory_p=120
    )
    assert not surpasses_total(boundary)  # equality must not count

    # brute-force verification: count the columns of actually assembled views
    d = 4
    rng = make_rng(99, 6)
    full_view = loss.build_similarity(gaussian(rng, 128, d, 1.0), gaussian(rng, 128, d, 1.0))
    assert full_view.n_cols - 1 == 127
    local_view = loss.build_similarity(gaussian(rng, 8, d, 1.0), gaussian(rng, 8, d, 1.0))
    assert local_view.n_cols - 1 == 7
    banked_view = loss.build_similarity(
        gaussian(rng, 8, d, 1.0), gaussian(rng, 8, d, 1.0),
        gaussian(rng, 128, d, 1.0), gaussian(rng, 128, d, 1.0),
    )
    assert banked_view.n_cols - 1 == 135

    # and the views every strategy assembles during real steps
    for kind, kwargs in (
        ("fullbatch", {}),
        ("gradaccum", {"accum_steps": 2}),
        ("gradcache", {"accum_steps": 2}),
        ("prebatch", {"accum_steps": 2, "n_memory_p": 6}),
        ("contaccum", {"accum_steps": 2, "n_memory_q": 6, "n_memory_p": 6}),
    ):
        cfg = StrategyConfig(kind=kind, n_local=4, **kwargs)
        enc_q, enc_p = make_encoders(60)
        bank = DualMemoryBank(cfg.n_memory_q, cfg.n_memory_p, 4)
        for u in range(3):
            out = run_step(enc_q, enc_p, make_batch(80 + u, cfg.n_total), cfg, bank, u)
        for s in out.stats:
            assert s.negatives_per_query == negative_count(cfg, bank_fill=s.bank_fill_p)
    _pass(4, "formulas match brute-force column counts for every strategy")


# --------------------------------------------------------------- criterion 5


def test_criterion_5_memory_accounting():
    gib = 2.0**30
    assert byte_usage(128, 768) == 786_432 and round(byte_usage(128, 768) / gib, 4) == 0.0007
    assert byte_usage(512, 768) == 3_145_728 and round(byte_usage(512, 768) / gib, 4) == 0.0029
    assert byte_usage(1024, 768) == 6_291_456 and round(byte_usage(1024, 768) / gib, 4) == 0.0059
    # the published 5096-entry row (0.0117 GB) is inconsistent with the formula,
    # which gives ~0.0292 GB; the artifact implements the formula
    table_row_gb = 0.0117
    formula_gb = round(byte_usage(5096, 768) / gib, 4)
    assert formula_gb == 0.0292
    assert abs(formula_gb - table_row_gb) > 0.01
    _pass(5, f"formula values match; 5096-entry table row documented inconsistent ({formula_gb} GB)")


# --------------------------------------------------------------- criterion 6


def test_criterion_6_gradient_norm_imbalance(frozen_task):
    t0 = time.time()
    base = dict(n_local=8, accum_steps=4)
    pb = train(frozen_task, 0, dict(kind="prebatch", n_memory_p=128, **base), 400)
    ca = train(
        frozen_task, 0, dict(kind="contaccum", n_memory_q=128, n_memory_p=128, **base), 400
    )
    dis = train(
        frozen_task, 0, dict(kind="contaccum", n_memory_q=128, n_memory_p=128, **base),
        400, disable_at=200,
    )
    r_pb, r_ca, r_dis = per_update_ratios(pb), per_update_ratios(ca), per_update_ratios(dis)
    assert len(r_pb) == len(r_ca) == len(r_dis) == 400
    pb_med = float(np.median(r_pb[300:]))
    ca_med = float(np.median(r_ca[300:]))
    assert pb_med > 3 * ca_med
    assert 0.5 <= ca_med <= 2.0
    pre = float(np.median(r_dis[:200]))
    post = float(np.median(r_dis[200:]))
    assert post >= 2 * pre
    elapsed = time.time() - t0
    assert elapsed < 120.0
    _pass(
        6,
        f"passage-only median {pb_med:.2f} vs dual {ca_med:.2f} ({pb_med / ca_med:.1f}x); "
        f"disable at 200: {pre:.2f} -> {post:.2f} ({post / pre:.1f}x); {elapsed:.1f}s",
    )


# --------------------------------------------------------------- criterion 7


def test_criterion_7_qualitative_strategy_ordering(frozen_task):
    t0 = time.time()
    base = dict(n_local=8, accum_steps=4)
    configs = {
        "contaccum": dict(kind="contaccum", n_memory_q=64, n_memory_p=64, **base),
        "gradcache": dict(kind="gradcache", **base),
        "fullbatch32": dict(kind="fullbatch", n_local=32),
        "gradaccum": dict(kind="gradaccum", **base),
        "fullbatch8": dict(kind="fullbatch", n_local=8),
    }
    top5 = {}
    for name, kwargs in configs.items():
        runs = [train(frozen_task, seed, kwargs, 600) for seed in (0, 1, 2)]
        top5[name] = 100.0 * float(np.mean([r.eval_records[-1].top5 for r in runs]))
    # ">=": no worse by more than 1 point; ">": better by at least 2 points
    assert top5["contaccum"] >= top5["gradcache"] - 1.0
    assert abs(top5["gradcache"] - top5["fullbatch32"]) <= 1.0
    assert top5["fullbatch32"] >= top5["gradaccum"] + 2.0
    assert top5["gradaccum"] >= top5["fullbatch8"] + 2.0
    elapsed = time.time() - t0
    assert elapsed < 300.0
    ordering = "  ".join(f"{k}={v:.2f}" for k, v in top5.items())
    _pass(7, f"mean top@5 (3 seeds): {ordering}; {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 8


def test_criterion_8_pass_counter_proxy(frozen_task):
    base = dict(n_local=8, accum_steps=4)
    logs = {
        "gradaccum": train(frozen_task, 0, dict(kind="gradaccum", **base), 3),
        "gradcache": train(frozen_task, 0, dict(kind="gradcache", **base), 3),
        "contaccum": train(
            frozen_task, 0, dict(kind="contaccum", n_memory_q=64, n_memory_p=64, **base), 3
        ),
    }
    increments = {}
    for name, log in logs.items():
        per_update = {}
        for s in log.step_stats:
            per_update[s.step] = s.fwd_passes_cum
        steps = sorted(per_update)
        increments[name] = [
            per_update[u] - (per_update[steps[i - 1]] if i else 0)
            for i, u in enumerate(steps)
        ]
    assert all(gc == 2 * ga for gc, ga in zip(increments["gradcache"], increments["gradaccum"]))
    assert increments["contaccum"] == increments["gradaccum"]
    _pass(
        8,
        f"per-update forwards: gradaccum={increments['gradaccum'][0]}, "
        f"gradcache={increments['gradcache'][0]} (2x), contaccum={increments['contaccum'][0]}",
    )


# --------------------------------------------------------------- criterion 9


def test_criterion_9_similarity_mass(frozen_task):
    # raw mode against an independent double loop
    worst = 0.0
    for seed in range(5):
        rng = make_rng(seed, 91)
        q = gaussian(rng, 5, 6, 1.0)
        buckets = {1: gaussian(rng, 4, 6, 1.0), 2: gaussian(rng, 3, 6, 1.0)}
        p_cur = gaussian(rng, 5, 6, 1.0)
        got = sim_mass(q, buckets, p_cur, mode="raw")
        for age, rows in [(0, p_cur)] + list(buckets.items()):
            total = 0.0
            for i in range(q.shape[0]):
                for j in range(rows.shape[0]):
                    total += float(q[i] @ rows[j])
            worst = max(worst, abs(got[age] - total / q.shape[0]))
    assert worst <= 1e-12

    # softmax mode: per-query bucket masses add to 1
    for seed in range(5):
        rng = make_rng(seed, 92)
        buckets = {1: gaussian(rng, 4, 6, 1.0), 3: gaussian(rng, 2, 6, 1.0)}
        p_cur = gaussian(rng, 1, 6, 1.0)
        for n_q in (1, 6):  # n_q == 1 is the per-query case
            q = gaussian(rng, n_q, 6, 1.0)
            masses = sim_mass(q, buckets, p_cur, tau=0.7, mode="softmax")
            assert abs(sum(masses.values()) - 1.0) <= 1e-12

    # qualitative age profile from a real banked run, logged for inspection
    log = train(
        frozen_task, 0,
        dict(kind="contaccum", n_local=8, accum_steps=4, n_memory_q=64, n_memory_p=64,
             log_sim_mass=True),
        12,
    )
    last_update = max(r[0] for r in log.sim_mass_rows)
    profile = {age: soft for u, k, age, raw, soft in log.sim_mass_rows if u == last_update and k == 3}
    table = " ".join(f"age{a}={m:.3f}" for a, m in sorted(profile.items()))
    _pass(9, f"raw<=1e-12, softmax masses normalise; age profile (inspection): {table}")


# -------------------------------------------------------------- criterion 10


def test_criterion_10_end_to_end_determinism(tmp_path):
    args = [
        "--set", "strategy=contaccum", "--set", "n_local=4", "--set", "accum_steps=2",
        "--set", "n_memory_q=16", "--set", "n_memory_p=16", "--set", "total_steps=8",
        "--set", "eval_every=4", "--set", "d_in=6", "--set", "d_model=4",
        "--set", "hidden_dim=5", "--set", "latent_dim=3", "--set", "n_train=32",
        "--set", "n_corpus=64", "--set", "seed=3", "--set", "use_hard_negatives=true",
    ]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--out", str(a)] + args) == 0
    assert main(["train", "--out", str(b)] + args) == 0
    metrics_a = (a / "metrics.csv").read_bytes()
    assert metrics_a == (b / "metrics.csv").read_bytes()
    assert (a / "eval.csv").read_bytes() == (b / "eval.csv").read_bytes()
    assert len(metrics_a.splitlines()) == 1 + 8 * 2
    _pass(10, "repeated train runs write byte-identical metrics.csv and eval.csv")
