"""The five training-step strategies.

Every strategy maps one total batch of pairs to accumulated parameter
gradients for the two encoders plus per-substep instrumentation:

  fullbatch  - one similarity matrix over the whole batch.
  gradaccum  - K local batches, each with its own small similarity matrix,
               gradients averaged by 1/K.
  gradcache  - two-phase: representation-only forwards over all local
               batches, one full-batch loss and representation gradient,
               then per-local-batch re-forward and backward. Parameter
               gradients match fullbatch exactly.
  prebatch   - gradaccum plus a passage-only memory bank as extra negative
               columns (optionally activated only after a gate update).
  contaccum  - gradaccum plus pair-aligned query and passage banks; each
               substep reads the bank, computes gradients, then enqueues
               its own representations.

Pass counters count encoder forward/backward invocations (a local batch and
its hard negatives ride in a single passage forward).
"""

from dataclasses import dataclass, field

import numpy as np

from . import encoder, loss
from .data import Batch
from .encoder import EncoderState, GradBuffer, grad_add, grad_scale, grad_zeros
from .instrumentation import StepStats, group_rows_by_age, sim_mass
from .membank import DualMemoryBank
from .numerics import Mat, empty_mat

FULL_BATCH = "fullbatch"
GRAD_ACCUM = "gradaccum"
GRAD_CACHE = "gradcache"
PRE_BATCH = "prebatch"
CONT_ACCUM = "contaccum"
KINDS = (FULL_BATCH, GRAD_ACCUM, GRAD_CACHE, PRE_BATCH, CONT_ACCUM)


@dataclass(frozen=True)
class StrategyConfig:
    """Which step algorithm runs and its batch/bank geometry."""

    kind: str = FULL_BATCH
    n_local: int = 8
    accum_steps: int = 1
    n_memory_q: int = 0
    n_memory_p: int = 0
    tau: float = 1.0
    use_hard_negatives: bool = False
    enable_bank_after_step: int | None = None
    disable_query_bank_at_step: int | None = None
    bank_same_update_only: bool = False
    log_sim_mass: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        if self.n_local < 1:
            raise ValueError(f"n_local must be >= 1, got {self.n_local}")
        if self.accum_steps < 1:
            raise ValueError(f"accum_steps must be >= 1, got {self.accum_steps}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.n_memory_q < 0 or self.n_memory_p < 0:
            raise ValueError("bank sizes must be >= 0")
        if self.kind == FULL_BATCH and self.accum_steps != 1:
            raise ValueError("fullbatch requires accum_steps == 1")
        if self.kind == PRE_BATCH and not (self.n_memory_q == 0 and self.n_memory_p > 0):
            raise ValueError(
                f"prebatch requires n_memory_q == 0 and n_memory_p > 0, "
                f"got n_memory_q={self.n_memory_q}, n_memory_p={self.n_memory_p}"
            )
        if self.kind == CONT_ACCUM and self.n_memory_q != self.n_memory_p:
            raise ValueError(
                f"contaccum requires n_memory_q == n_memory_p, "
                f"got n_memory_q={self.n_memory_q}, n_memory_p={self.n_memory_p}"
            )

    @property
    def n_total(self) -> int:
        return self.n_local * self.accum_steps

    @property
    def uses_bank(self) -> bool:
        return self.kind in (PRE_BATCH, CONT_ACCUM)


@dataclass
class StepOutcome:
    """Accumulated gradients plus instrumentation for one optimizer update."""

    grad_q: GradBuffer
    grad_p: GradBuffer
    loss: float
    stats: list[StepStats]
    forward_passes: int
    backward_passes: int
    sim_mass_records: list[tuple[int, dict[int, float], dict[int, float]]] = field(
        default_factory=list
    )


def negative_count(cfg: StrategyConfig, bank_fill: int = 0) -> int:
    """Negatives per query in one substep's similarity view.

    bank_fill is the passage-bank fill at view time (banked strategies only).
    Matches brute-force column counting of the assembled view.
    """
    if cfg.kind in (FULL_BATCH, GRAD_CACHE):
        cols = cfg.n_total + (cfg.n_total if cfg.use_hard_negatives else 0)
    elif cfg.kind == GRAD_ACCUM:
        cols = cfg.n_local + (cfg.n_local if cfg.use_hard_negatives else 0)
    else:
        cols = cfg.n_local + bank_fill + (cfg.n_local if cfg.use_hard_negatives else 0)
    return cols - 1


def surpasses_total(cfg: StrategyConfig) -> bool:
    """True iff the passage bank pushes negatives past what the total batch gives."""
    return cfg.n_memory_p > cfg.n_local * (cfg.accum_steps - 1)


def _split_batch(batch: Batch, parts: int) -> list[Batch]:
    n = batch.n_pairs
    if n % parts != 0:
        raise ValueError(f"batch of {n} pairs is not divisible into {parts} local batches")
    size = n // parts
    out = []
    for k in range(parts):
        sl = slice(k * size, (k + 1) * size)
        hard = batch.hard_inputs[sl] if batch.hard_inputs is not None else None
        out.append(Batch(batch.q_inputs[sl], batch.p_inputs[sl], hard))
    return out


def _check_batch(batch: Batch, cfg: StrategyConfig) -> None:
    if batch.n_pairs != cfg.n_total:
        raise ValueError(
            f"batch has {batch.n_pairs} pairs but the config expects "
            f"n_local * accum_steps = {cfg.n_total}"
        )
    if cfg.use_hard_negatives and batch.hard_inputs is None:
        raise ValueError("config requests hard negatives but the batch carries none")


def _encode_with_hard(enc_p: EncoderState, sub: Batch, capture: bool):
    """One passage forward covering positives and (optionally) hard negatives."""
    if sub.hard_inputs is not None:
        stacked = np.vstack([sub.p_inputs, sub.hard_inputs])
    else:
        stacked = sub.p_inputs
    reps, tape = encoder.forward(enc_p, stacked, capture=capture)
    n = sub.n_pairs
    hard_reps = reps[n:] if sub.hard_inputs is not None else None
    return reps[:n], hard_reps, reps, tape


def _substep_grads(
    enc_q: EncoderState,
    enc_p: EncoderState,
    sub: Batch,
    bank_q: Mat,
    bank_p: Mat,
    tau: float,
):
    """Captured forwards, banked similarity view, closed-form representation
    gradients, and encoder backwards for one local batch.

    Banked rows/columns and hard-negative columns are constants: their
    upstream never reaches an encoder backward (hard rows get a zero pad so
    the positives+hard tape can be walked in one call).
    """
    q_reps, q_tape = encoder.forward(enc_q, sub.q_inputs, capture=True)
    p_reps, hard_reps, _, p_tape = _encode_with_hard(enc_p, sub, capture=True)
    view = loss.build_similarity(q_reps, p_reps, bank_q, bank_p, hard_reps, tau)
    q_all = np.vstack([q_reps, bank_q])
    p_all = np.vstack([p_reps, bank_p] + ([hard_reps] if hard_reps is not None else []))
    lg = loss.rep_gradients(view, q_all, p_all)
    g_q = encoder.backward(enc_q, q_tape, lg.grad_q_cur)
    if hard_reps is not None:
        upstream_p = np.vstack([lg.grad_p_cur, np.zeros_like(hard_reps)])
    else:
        upstream_p = lg.grad_p_cur
    g_p = encoder.backward(enc_p, p_tape, upstream_p)
    return lg.loss, g_q, g_p, q_reps, p_reps, view


def _accum_step(
    enc_q: EncoderState,
    enc_p: EncoderState,
    batch: Batch,
    cfg: StrategyConfig,
    update_index: int,
    bank: DualMemoryBank | None,
) -> StepOutcome:
    """Shared body for fullbatch, gradaccum and the banked strategies.

    When a bank is passed, each substep builds its view from the current bank
    snapshot and enqueues its own pair representations afterwards, so a batch
    never appears as current and banked at once.
    """
    _check_batch(batch, cfg)
    k_steps = cfg.accum_steps
    subs = _split_batch(batch, k_steps)
    d_model = enc_q.d_model
    acc_q, acc_p = grad_zeros(enc_q), grad_zeros(enc_p)
    stats: list[StepStats] = []
    sim_records: list[tuple[int, dict[int, float], dict[int, float]]] = []
    loss_sum = 0.0
    fwd = bwd = 0
    for k, sub in enumerate(subs):
        substep_index = update_index * k_steps + k
        if bank is not None:
            bank_q, bank_p, ages = bank.snapshot(substep_index)
        else:
            bank_q, bank_p, ages = empty_mat(d_model), empty_mat(d_model), []
        sub_loss, g_q, g_p, q_reps, p_reps, view = _substep_grads(
            enc_q, enc_p, sub, bank_q, bank_p, cfg.tau
        )
        fwd += 2
        bwd += 2
        if cfg.log_sim_mass:
            buckets = group_rows_by_age(bank_p, ages)
            sim_records.append(
                (
                    k,
                    sim_mass(q_reps, buckets, p_reps, cfg.tau, mode="raw"),
                    sim_mass(q_reps, buckets, p_reps, cfg.tau, mode="softmax"),
                )
            )
        if bank is not None:
            bank.enqueue_pairs(q_reps, p_reps, substep_index)
        acc_q = grad_add(acc_q, g_q)
        acc_p = grad_add(acc_p, g_p)
        loss_sum += sub_loss
        stats.append(
            StepStats(
                step=update_index,
                substep=k,
                strategy=cfg.kind,
                loss=sub_loss,
                negatives_per_query=view.n_cols - 1,
                bank_fill_q=bank_q.shape[0],
                bank_fill_p=bank_p.shape[0],
                bank_bytes=(bank_q.shape[0] + bank_p.shape[0]) * d_model * 4,
                fwd_passes_cum=fwd,
                bwd_passes_cum=bwd,
            )
        )
    scale = 1.0 / k_steps
    return StepOutcome(
        grad_q=grad_scale(acc_q, scale),
        grad_p=grad_scale(acc_p, scale),
        loss=loss_sum * scale,
        stats=stats,
        forward_passes=fwd,
        backward_passes=bwd,
        sim_mass_records=sim_records,
    )


def step_full_batch(
    enc_q: EncoderState, enc_p: EncoderState, batch: Batch, cfg: StrategyConfig, update_index: int = 0
) -> StepOutcome:
    """One similarity matrix over the whole batch: n_total - 1 in-batch negatives."""
    if cfg.accum_steps != 1:
        raise ValueError("step_full_batch requires accum_steps == 1")
    return _accum_step(enc_q, enc_p, batch, cfg, update_index, bank=None)


def step_grad_accum(
    enc_q: EncoderState, enc_p: EncoderState, batch: Batch, cfg: StrategyConfig, update_index: int = 0
) -> StepOutcome:
    """K local losses averaged by 1/K; each sees only n_local - 1 negatives."""
    return _accum_step(enc_q, enc_p, batch, cfg, update_index, bank=None)


def step_grad_cache(
    enc_q: EncoderState, enc_p: EncoderState, batch: Batch, cfg: StrategyConfig, update_index: int = 0
) -> StepOutcome:
    """Full-batch loss in bounded activation memory.

    Phase 1 runs representation-only (no-capture) forwards over every local
    batch. Phase 2 computes the full similarity matrix and the closed-form
    representation gradients once. Phase 3 re-forwards each local batch with
    capture and backpropagates its slice of the cached upstream. Parameter
    gradients equal step_full_batch up to float round-off; the price is twice
    the forward passes of gradaccum.
    """
    _check_batch(batch, cfg)
    k_steps = cfg.accum_steps
    subs = _split_batch(batch, k_steps)
    n_local = cfg.n_local
    fwd = bwd = 0

    q_parts, p_parts, hard_parts = [], [], []
    for sub in subs:
        q_reps, _ = encoder.forward(enc_q, sub.q_inputs, capture=False)
        p_reps, hard_reps, _, _ = _encode_with_hard(enc_p, sub, capture=False)
        fwd += 2
        q_parts.append(q_reps)
        p_parts.append(p_reps)
        if hard_reps is not None:
            hard_parts.append(hard_reps)

    q_all = np.vstack(q_parts)
    p_pos = np.vstack(p_parts)
    hard_all = np.vstack(hard_parts) if hard_parts else None
    view = loss.build_similarity(q_all, p_pos, None, None, hard_all, cfg.tau)
    p_all = np.vstack([p_pos, hard_all]) if hard_all is not None else p_pos
    lg = loss.rep_gradients(view, q_all, p_all)

    acc_q, acc_p = grad_zeros(enc_q), grad_zeros(enc_p)
    stats: list[StepStats] = []
    for k, sub in enumerate(subs):
        rows = slice(k * n_local, (k + 1) * n_local)
        q_reps, q_tape = encoder.forward(enc_q, sub.q_inputs, capture=True)
        _, hard_reps, _, p_tape = _encode_with_hard(enc_p, sub, capture=True)
        fwd += 2
        g_q = encoder.backward(enc_q, q_tape, lg.grad_q_cur[rows])
        if hard_reps is not None:
            upstream_p = np.vstack([lg.grad_p_cur[rows], np.zeros_like(hard_reps)])
        else:
            upstream_p = lg.grad_p_cur[rows]
        g_p = encoder.backward(enc_p, p_tape, upstream_p)
        bwd += 2
        acc_q = grad_add(acc_q, g_q)
        acc_p = grad_add(acc_p, g_p)
        stats.append(
            StepStats(
                step=update_index,
                substep=k,
                strategy=cfg.kind,
                loss=lg.loss,
                negatives_per_query=view.n_cols - 1,
                bank_fill_q=0,
                bank_fill_p=0,
                bank_bytes=0,
                fwd_passes_cum=fwd,
                bwd_passes_cum=bwd,
            )
        )
    return StepOutcome(
        grad_q=acc_q,
        grad_p=acc_p,
        loss=lg.loss,
        stats=stats,
        forward_passes=fwd,
        backward_passes=bwd,
    )


def step_contaccum(
    enc_q: EncoderState,
    enc_p: EncoderState,
    batch: Batch,
    cfg: StrategyConfig,
    bank: DualMemoryBank,
    update_index: int = 0,
) -> StepOutcome:
    """Gradient accumulation over views widened by the dual memory bank.

    Substep k sees n_local + bank_fill - 1 negatives (bank_fill grows to
    n_memory_p once warm) and enqueues its own pair representations after its
    gradients are computed.
    """
    if bank.d_model != enc_q.d_model:
        raise ValueError(f"bank d_model {bank.d_model} does not match encoder {enc_q.d_model}")
    if cfg.bank_same_update_only:
        bank.clear()
    return _accum_step(enc_q, enc_p, batch, cfg, update_index, bank=bank)


def step_prebatch(
    enc_q: EncoderState,
    enc_p: EncoderState,
    batch: Batch,
    cfg: StrategyConfig,
    bank: DualMemoryBank,
    update_index: int = 0,
) -> StepOutcome:
    """Passage-only bank: rectangular views, query side untouched.

    Before the activation gate (enable_bank_after_step) the bank is neither
    read nor written and the step is exactly gradaccum.
    """
    if bank.cap_q != 0:
        raise ValueError("prebatch requires a passage-only bank (cap_q == 0)")
    gate = cfg.enable_bank_after_step
    if gate is not None and update_index < gate:
        return _accum_step(enc_q, enc_p, batch, cfg, update_index, bank=None)
    if cfg.bank_same_update_only:
        bank.clear()
    return _accum_step(enc_q, enc_p, batch, cfg, update_index, bank=bank)


def run_step(
    enc_q: EncoderState,
    enc_p: EncoderState,
    batch: Batch,
    cfg: StrategyConfig,
    bank: DualMemoryBank | None = None,
    update_index: int = 0,
) -> StepOutcome:
    """Dispatch one optimizer update's worth of work to the configured strategy."""
    if cfg.kind == FULL_BATCH:
        return step_full_batch(enc_q, enc_p, batch, cfg, update_index)
    if cfg.kind == GRAD_ACCUM:
        return step_grad_accum(enc_q, enc_p, batch, cfg, update_index)
    if cfg.kind == GRAD_CACHE:
        return step_grad_cache(enc_q, enc_p, batch, cfg, update_index)
    if bank is None:
        raise ValueError(f"strategy {cfg.kind} needs a memory bank")
    if cfg.kind == CONT_ACCUM:
        return step_contaccum(enc_q, enc_p, batch, cfg, bank, update_index)
    return step_prebatch(enc_q, enc_p, batch, cfg, bank, update_index)
