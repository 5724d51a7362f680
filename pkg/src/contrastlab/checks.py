"""Self-contained verification suites behind the gradcheck and equivalence
CLI subcommands: finite-difference checks of every gradient path and the
strategy-equivalence lattice.
"""

from dataclasses import dataclass

import numpy as np

from . import encoder, loss
from .data import Batch
from .encoder import EncoderState
from .membank import DualMemoryBank
from .numerics import empty_mat, gaussian, make_rng
from .strategies import (
    StrategyConfig,
    step_contaccum,
    step_full_batch,
    step_grad_accum,
    step_grad_cache,
    step_prebatch,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool


def _result(name: str, value: float, tol: float, larger_is_better: bool = False) -> CheckResult:
    ok = value >= tol if larger_is_better else value <= tol
    return CheckResult(name, value, tol, ok)


def norm_rel_err(a, b) -> float:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff / denom if denom > 1e-12 else diff


def grads_rel_diff(ga, gb) -> float:
    return max(norm_rel_err(a, b) for a, b in zip(ga.arrays(), gb.arrays()))


def outcome_rel_diff(out_a, out_b) -> float:
    return max(
        grads_rel_diff(out_a.grad_q, out_b.grad_q), grads_rel_diff(out_a.grad_p, out_b.grad_p)
    )


def _fd_encoder_params(enc: EncoderState, inputs, upstream, h=1e-6):
    def objective(state):
        reps, _ = encoder.forward(state, inputs)
        return float((upstream * reps).sum())

    grads = []
    for idx, p in enumerate(enc.param_arrays()):
        g = np.zeros_like(p)
        for j in range(p.size):
            for sign in (+1.0, -1.0):
                arrays = [a.copy() for a in enc.param_arrays()]
                arrays[idx].reshape(-1)[j] += sign * h
                g.reshape(-1)[j] += sign * objective(enc.with_param_arrays(arrays)) / (2 * h)
        grads.append(g)
    return grads


def _encoder_fd_suite(kind: str, seed: int) -> CheckResult:
    hidden = 5 if kind == "mlp" else None
    enc = encoder.init(make_rng(seed, 1), kind, 5, 4, hidden=hidden)
    inputs = gaussian(make_rng(seed, 2), 6, 5, 1.0)
    upstream = gaussian(make_rng(seed, 3), 6, 4, 1.0)
    _, tape = encoder.forward(enc, inputs, capture=True)
    analytic = encoder.backward(enc, tape, upstream)
    numeric = _fd_encoder_params(enc, inputs, upstream)
    worst = max(norm_rel_err(a, f) for a, f in zip(analytic.arrays(), numeric))
    return _result(f"encoder-{kind} params vs finite differences", worst, 1e-6)


def _loss_fd_case(seed: int, n_bank: int, n_hard: int, tau: float, h=1e-6) -> float:
    rng = make_rng(seed, 4)
    d = 8
    q = gaussian(rng, 4, d, 1.0)
    p = gaussian(rng, 4, d, 1.0)
    bq = gaussian(rng, n_bank, d, 1.0) if n_bank else empty_mat(d)
    bp = gaussian(rng, n_bank, d, 1.0) if n_bank else empty_mat(d)
    hard = gaussian(rng, n_hard, d, 1.0) if n_hard else None

    def loss_of(qc, pc):
        return loss.info_nce(loss.build_similarity(qc, pc, bq, bp, hard, tau))

    view = loss.build_similarity(q, p, bq, bp, hard, tau)
    p_all = np.vstack([p, bp] + ([hard] if hard is not None else []))
    lg = loss.rep_gradients(view, np.vstack([q, bq]), p_all)
    worst = 0.0
    for target, analytic in ((q, lg.grad_q_cur), (p, lg.grad_p_cur)):
        fd = np.zeros_like(target)
        for j in range(target.size):
            for sign in (+1.0, -1.0):
                bumped = target.copy()
                bumped.reshape(-1)[j] += sign * h
                val = loss_of(bumped, p) if target is q else loss_of(q, bumped)
                fd.reshape(-1)[j] += sign * val / (2 * h)
        worst = max(worst, norm_rel_err(analytic, fd))
    return worst


def run_gradcheck(seed: int = 0) -> list[CheckResult]:
    """Finite-difference suites for encoder backward and the loss gradients."""
    results = [_encoder_fd_suite("linear", seed), _encoder_fd_suite("mlp", seed + 1)]
    for n_bank in (0, 6):
        for tau in (0.5, 1.0, 2.0):
            for n_hard in (0, 4):
                worst = max(
                    _loss_fd_case(seed + 10 * s, n_bank, n_hard, tau) for s in range(3)
                )
                name = (
                    f"loss gradients vs finite differences "
                    f"(bank={n_bank}, hard={n_hard}, tau={tau})"
                )
                results.append(_result(name, worst, 1e-6))
    return results


def _instance(seed: int, kind: str, n_total: int):
    hidden = 5 if kind == "mlp" else None
    enc_q = encoder.init(make_rng(seed, 1), kind, 6, 4, hidden=hidden)
    enc_p = encoder.init(make_rng(seed, 2), kind, 6, 4, hidden=hidden)
    rng = make_rng(seed, 3)
    batch = Batch(gaussian(rng, n_total, 6, 1.0), gaussian(rng, n_total, 6, 1.0))
    return enc_q, enc_p, batch


def run_equivalence(seed: int = 0) -> list[CheckResult]:
    """The strategy-equivalence lattice plus the accumulation-gap check."""
    results = []

    worst = 0.0
    for kind in ("linear", "mlp"):
        for s in range(seed, seed + 3):
            enc_q, enc_p, batch = _instance(s, kind, 16)
            fb = step_full_batch(enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=16))
            gc = step_grad_cache(
                enc_q, enc_p, batch, StrategyConfig(kind="gradcache", n_local=4, accum_steps=4)
            )
            worst = max(worst, outcome_rel_diff(fb, gc))
    results.append(_result("gradcache == fullbatch", worst, 1e-9))

    worst = 0.0
    for s in range(seed, seed + 3):
        enc_q, enc_p, batch = _instance(s, "mlp", 8)
        fb = step_full_batch(enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=8))
        ga = step_grad_accum(enc_q, enc_p, batch, StrategyConfig(kind="gradaccum", n_local=8))
        worst = max(worst, outcome_rel_diff(fb, ga))
    results.append(_result("gradaccum(K=1) == fullbatch", worst, 1e-12))

    worst = 0.0
    for s in range(seed, seed + 3):
        enc_q, enc_p, batch = _instance(s, "mlp", 8)
        fb = step_full_batch(enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=8))
        bank = DualMemoryBank(16, 16, 4)
        ca = step_contaccum(
            enc_q, enc_p, batch,
            StrategyConfig(kind="contaccum", n_local=8, n_memory_q=16, n_memory_p=16),
            bank,
        )
        worst = max(worst, outcome_rel_diff(fb, ca))
    results.append(_result("contaccum(empty bank, K=1) == fullbatch", worst, 1e-12))

    worst = 0.0
    for s in range(seed, seed + 3):
        enc_q, enc_p, batch = _instance(s, "mlp", 8)
        ga = step_grad_accum(
            enc_q, enc_p, batch, StrategyConfig(kind="gradaccum", n_local=4, accum_steps=2)
        )
        bank = DualMemoryBank(0, 16, 4)
        pb = step_prebatch(
            enc_q, enc_p, batch,
            StrategyConfig(
                kind="prebatch", n_local=4, accum_steps=2, n_memory_p=16,
                enable_bank_after_step=1000,
            ),
            bank,
        )
        worst = max(worst, outcome_rel_diff(ga, pb))
    results.append(_result("prebatch(pre-gate) == gradaccum", worst, 1e-12))

    differing = 0
    n_seeds = 20
    for s in range(seed, seed + n_seeds):
        enc_q, enc_p, batch = _instance(s, "mlp", 16)
        fb = step_full_batch(enc_q, enc_p, batch, StrategyConfig(kind="fullbatch", n_local=16))
        ga = step_grad_accum(
            enc_q, enc_p, batch, StrategyConfig(kind="gradaccum", n_local=4, accum_steps=4)
        )
        if outcome_rel_diff(fb, ga) > 1e-3:
            differing += 1
    results.append(
        _result("gradaccum(K=4) != fullbatch (fraction of seeds)", differing / n_seeds, 0.9, True)
    )
    return results
