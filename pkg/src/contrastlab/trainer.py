"""Optimization loop: AdamW with linear warmup/decay and per-encoder global
gradient clipping, driving any step strategy over a synthetic task.

Clipping is applied per encoder (each encoder's own global norm is capped)
so the post-clip passage/query norm ratio stays meaningful. Norm, ratio and
lr values are stamped identically onto every substep row of an update.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import data, encoder
from .encoder import EncoderState, GradBuffer
from .instrumentation import StepStats, grad_norm_ratio
from .membank import DualMemoryBank
from .numerics import NonFiniteError, global_l2_norm, make_rng
from .strategies import StrategyConfig, run_step

# Stream keys deriving independent generators from one seed.
TASK_STREAM = 0
ENC_Q_STREAM = 1
ENC_P_STREAM = 2
BATCH_STREAM = 3


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float = 1e-3
    warmup_steps: int | None = None  # None: 5% of total_steps
    total_steps: int = 200
    clip_norm: float = 2.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    eval_every: int = 0  # 0: evaluate only after the final update
    eval_ks: tuple[int, ...] = (1, 5, 10, 20)

    def __post_init__(self):
        if self.peak_lr <= 0:
            raise ValueError(f"peak_lr must be positive, got {self.peak_lr}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.warmup_steps is not None and not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError(
                f"warmup_steps must be in [0, total_steps], got {self.warmup_steps}"
            )
        if self.eval_every < 0:
            raise ValueError(f"eval_every must be >= 0, got {self.eval_every}")

    @property
    def resolved_warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return round(0.05 * self.total_steps)


def full_scale_profile(total_steps: int, seed: int = 0, eval_every: int = 0) -> TrainConfig:
    """Preset matching full-scale transformer retriever training: lr 2e-5,
    warmup 1237 steps, clip 2.0. Desk-scale MLPs train better with the
    defaults (higher lr, proportional warmup)."""
    return TrainConfig(
        peak_lr=2e-5,
        warmup_steps=min(1237, total_steps),
        total_steps=total_steps,
        clip_norm=2.0,
        seed=seed,
        eval_every=eval_every,
    )


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Linear 0 -> peak over [0, warmup], then linear peak -> 0 over [warmup, total]."""
    if not 0 <= step <= cfg.total_steps:
        raise ValueError(f"step must be in [0, {cfg.total_steps}], got {step}")
    warmup = cfg.resolved_warmup
    if step < warmup:
        return cfg.peak_lr * step / warmup
    if cfg.total_steps == warmup:
        return cfg.peak_lr
    return cfg.peak_lr * (cfg.total_steps - step) / (cfg.total_steps - warmup)


def clip_global(
    grad_q: GradBuffer, grad_p: GradBuffer, clip_norm: float
) -> tuple[tuple[GradBuffer, GradBuffer], tuple[float, float]]:
    """Cap each encoder's global gradient norm at clip_norm.

    Returns the (possibly scaled) gradients and the pre-clip norms.
    """
    if clip_norm <= 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    clipped = []
    pre_norms = []
    for g in (grad_q, grad_p):
        norm = global_l2_norm(g.arrays())
        pre_norms.append(norm)
        if norm > clip_norm:
            clipped.append(encoder.grad_scale(g, clip_norm / norm))
        else:
            clipped.append(g)
    return (clipped[0], clipped[1]), (pre_norms[0], pre_norms[1])


@dataclass
class OptState:
    """AdamW moments for both encoders plus the shared update counter."""

    m_q: tuple
    v_q: tuple
    m_p: tuple
    v_p: tuple
    t: int = 0

    @classmethod
    def zeros(cls, enc_q: EncoderState, enc_p: EncoderState) -> "OptState":
        zq = tuple(np.zeros_like(a) for a in enc_q.param_arrays())
        zp = tuple(np.zeros_like(a) for a in enc_p.param_arrays())
        return cls(m_q=zq, v_q=zq, m_p=zp, v_p=zp)


def adamw_update(
    opt: OptState, side: str, enc: EncoderState, grads: GradBuffer, lr: float, cfg: TrainConfig
) -> EncoderState:
    """Bias-corrected AdamW with decoupled weight decay for one encoder.

    Uses opt.t as the step count, so bump it (or call optimizer_step) first.
    """
    if side == "q":
        m_all, v_all = opt.m_q, opt.v_q
    elif side == "p":
        m_all, v_all = opt.m_p, opt.v_p
    else:
        raise ValueError(f"side must be 'q' or 'p', got {side!r}")
    if opt.t < 1:
        raise ValueError("optimizer step counter must be >= 1; bump opt.t first")
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**opt.t
    bc2 = 1.0 - b2**opt.t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(enc.param_arrays(), grads.arrays(), m_all, v_all):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        new_params.append(p - lr * (update + cfg.weight_decay * p))
        new_m.append(m)
        new_v.append(v)
    if side == "q":
        opt.m_q, opt.v_q = tuple(new_m), tuple(new_v)
    else:
        opt.m_p, opt.v_p = tuple(new_m), tuple(new_v)
    return enc.with_param_arrays(new_params)


def optimizer_step(
    opt: OptState,
    enc_q: EncoderState,
    grad_q: GradBuffer,
    enc_p: EncoderState,
    grad_p: GradBuffer,
    lr: float,
    cfg: TrainConfig,
) -> tuple[EncoderState, EncoderState]:
    """One shared-counter AdamW update of both encoders."""
    opt.t += 1
    return (
        adamw_update(opt, "q", enc_q, grad_q, lr, cfg),
        adamw_update(opt, "p", enc_p, grad_p, lr, cfg),
    )


@dataclass(frozen=True)
class EvalRecord:
    step: int
    top1: float
    top5: float
    top20: float
    recall20: float
    ndcg10: float
    ndcg20: float


@dataclass
class RunHooks:
    """Optional callbacks; on_update(update_index, enc_q, enc_p, bank, outcome)."""

    on_update: object | None = None
    on_eval: object | None = None


@dataclass
class MetricsLog:
    step_stats: list[StepStats] = field(default_factory=list)
    eval_records: list[EvalRecord] = field(default_factory=list)
    sim_mass_rows: list[tuple[int, int, int, float, float]] = field(default_factory=list)
    final_enc_q: EncoderState | None = None
    final_enc_p: EncoderState | None = None
    aborted: bool = False
    abort_message: str = ""


def _eval_record(enc_q, enc_p, task, step: int, ks) -> EvalRecord:
    m = data.evaluate(enc_q, enc_p, task, ks)
    return EvalRecord(
        step=step,
        top1=m["top@1"],
        top5=m["top@5"],
        top20=m["top@20"],
        recall20=m["recall@20"],
        ndcg10=m["ndcg@10"],
        ndcg20=m["ndcg@20"],
    )


def run_training(
    task: data.SyntheticTask,
    enc_q: EncoderState,
    enc_p: EncoderState,
    strategy_cfg: StrategyConfig,
    train_cfg: TrainConfig,
    hooks: RunHooks | None = None,
) -> MetricsLog:
    """Drive the configured strategy for total_steps optimizer updates.

    Per update: sample a batch (deterministic per seed and update index), run
    the strategy step, clip per encoder, stamp instrumentation, apply AdamW,
    then evaluate on schedule. A non-finite loss aborts the run with a
    diagnostic message instead of raising.
    """
    log = MetricsLog(final_enc_q=enc_q, final_enc_p=enc_p)
    bank = DualMemoryBank(strategy_cfg.n_memory_q, strategy_cfg.n_memory_p, enc_q.d_model)
    opt = OptState.zeros(enc_q, enc_p)
    fwd_base = bwd_base = 0
    for u in range(train_cfg.total_steps):
        if strategy_cfg.disable_query_bank_at_step == u:
            bank.set_query_bank_enabled(False)
        rng = make_rng(train_cfg.seed, BATCH_STREAM, u)
        batch = data.sample_batch(
            task, rng, strategy_cfg.n_total, with_hard=strategy_cfg.use_hard_negatives
        )
        try:
            outcome = run_step(enc_q, enc_p, batch, strategy_cfg, bank, update_index=u)
        except NonFiniteError as exc:
            log.aborted = True
            log.abort_message = f"non-finite values at update {u}: {exc}"
            break
        if not math.isfinite(outcome.loss):
            log.aborted = True
            log.abort_message = f"non-finite loss {outcome.loss!r} at update {u}"
            break
        (c_q, c_p), (pre_q, pre_p) = clip_global(
            outcome.grad_q, outcome.grad_p, train_cfg.clip_norm
        )
        post_q = global_l2_norm(c_q.arrays())
        post_p = global_l2_norm(c_p.arrays())
        ratio = grad_norm_ratio(post_p, post_q)
        lr = lr_at(train_cfg, u)
        for s in outcome.stats:
            log.step_stats.append(
                replace(
                    s,
                    grad_norm_q_pre=pre_q,
                    grad_norm_p_pre=pre_p,
                    grad_norm_q_post=post_q,
                    grad_norm_p_post=post_p,
                    grad_norm_ratio=ratio,
                    lr=lr,
                    fwd_passes_cum=s.fwd_passes_cum + fwd_base,
                    bwd_passes_cum=s.bwd_passes_cum + bwd_base,
                )
            )
        fwd_base += outcome.forward_passes
        bwd_base += outcome.backward_passes
        for k, raw, soft in outcome.sim_mass_records:
            ages = sorted(set(raw) | set(soft))
            for age in ages:
                log.sim_mass_rows.append((u, k, age, raw.get(age, 0.0), soft.get(age, 0.0)))
        enc_q, enc_p = optimizer_step(opt, enc_q, c_q, enc_p, c_p, lr, train_cfg)
        log.final_enc_q, log.final_enc_p = enc_q, enc_p
        if hooks is not None and hooks.on_update is not None:
            hooks.on_update(u, enc_q, enc_p, bank, outcome)
        is_last = u == train_cfg.total_steps - 1
        due = train_cfg.eval_every > 0 and (u + 1) % train_cfg.eval_every == 0
        if due or is_last:
            record = _eval_record(enc_q, enc_p, task, u + 1, train_cfg.eval_ks)
            log.eval_records.append(record)
            if hooks is not None and hooks.on_eval is not None:
                hooks.on_eval(record)
    return log
