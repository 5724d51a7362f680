"""Training diagnostics: per-substep stats records, the passage/query
gradient-norm ratio, similarity mass by representation age, and log summaries.
"""

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .numerics import Mat, as_mat, row_log_softmax


@dataclass(frozen=True)
class StepStats:
    """One row of instrumentation per accumulation substep.

    Strategies fill the fields they know (loss, negatives, bank state, pass
    counters); the trainer stamps the gradient-norm and lr fields once per
    update, identically onto every substep row of that update, since clipping
    happens on the accumulated gradient. grad_norm_ratio is post-clip
    passage/query; None encodes the undefined case (query norm 0) and is
    serialised as an empty CSV field.
    """

    step: int
    substep: int
    strategy: str
    loss: float
    negatives_per_query: int
    bank_fill_q: int
    bank_fill_p: int
    bank_bytes: int
    fwd_passes_cum: int
    bwd_passes_cum: int
    grad_norm_q_pre: float | None = None
    grad_norm_p_pre: float | None = None
    grad_norm_q_post: float | None = None
    grad_norm_p_post: float | None = None
    grad_norm_ratio: float | None = None
    lr: float | None = None


def grad_norm_ratio(norm_passage: float, norm_query: float) -> float | None:
    """Passage-to-query gradient-norm ratio; None when the query norm is 0."""
    if norm_passage < 0 or norm_query < 0:
        raise ValueError("gradient norms must be non-negative")
    if norm_query == 0.0:
        return None
    return norm_passage / norm_query


def group_rows_by_age(rows: Mat, ages: Sequence[int]) -> dict[int, Mat]:
    """Split a snapshot matrix into per-age buckets (ages >= 1)."""
    rows = as_mat(rows)
    if rows.shape[0] != len(ages):
        raise ValueError(f"{rows.shape[0]} rows but {len(ages)} ages")
    buckets: dict[int, list[int]] = {}
    for i, a in enumerate(ages):
        buckets.setdefault(int(a), []).append(i)
    return {a: rows[idx] for a, idx in buckets.items()}


def sim_mass(
    q_cur: Mat,
    banked_p_by_age: Mapping[int, Mat],
    p_cur: Mat,
    tau: float = 1.0,
    mode: str = "softmax",
) -> dict[int, float]:
    """Average similarity mass current queries assign to passages of each age.

    Age 0 is the current in-batch passage block; banked buckets use ages >= 1.
    raw mode: per bucket, the mean over queries of the summed dot products
    with that bucket's passages (no temperature, no normalisation).
    softmax mode: logits over all passage columns (current + banked) at
    temperature tau are row-softmaxed, then per-bucket probability mass is
    summed and averaged over queries; bucket masses add to 1 per query.
    Empty buckets are omitted from the output map.
    """
    if mode not in ("softmax", "raw"):
        raise ValueError(f"unknown sim_mass mode {mode!r}")
    q_cur = as_mat(q_cur)
    if q_cur.shape[0] < 1:
        raise ValueError("sim_mass needs at least one query")
    p_cur = as_mat(p_cur)
    buckets: list[tuple[int, Mat]] = []
    if p_cur.shape[0] > 0:
        buckets.append((0, p_cur))
    for age in sorted(banked_p_by_age):
        if age < 1:
            raise ValueError(f"banked bucket ages must be >= 1, got {age}")
        rows = as_mat(banked_p_by_age[age])
        if rows.shape[0] > 0:
            buckets.append((int(age), rows))
    if not buckets:
        return {}
    for _, rows in buckets:
        if rows.shape[1] != q_cur.shape[1]:
            raise ValueError("passage width does not match query width")
    if mode == "raw":
        return {age: float((q_cur @ rows.T).sum(axis=1).mean()) for age, rows in buckets}
    all_p = np.vstack([rows for _, rows in buckets])
    probs = np.exp(row_log_softmax(q_cur @ all_p.T, tau))
    out: dict[int, float] = {}
    offset = 0
    for age, rows in buckets:
        n = rows.shape[0]
        out[age] = float(probs[:, offset : offset + n].sum(axis=1).mean())
        offset += n
    return out


def aggregate(log: Sequence[StepStats], window: float = 1.0) -> dict[str, dict[str, float | None]]:
    """Per-strategy summary over the trailing `window` fraction of updates.

    Ratios are taken once per update (substep rows of an update share the
    value); losses use every substep row inside the window. Undefined ratios
    are skipped; statistics over an empty collection come back as None.
    """
    if not 0 < window <= 1:
        raise ValueError(f"window must be in (0, 1], got {window}")
    if not log:
        raise ValueError("aggregate needs a non-empty log")
    by_strategy: dict[str, list[StepStats]] = {}
    for s in log:
        by_strategy.setdefault(s.strategy, []).append(s)
    out: dict[str, dict[str, float | None]] = {}
    for strategy, rows in by_strategy.items():
        updates = sorted({s.step for s in rows})
        n_tail = max(1, math.ceil(window * len(updates)))
        tail = set(updates[-n_tail:])
        ratios = []
        seen = set()
        losses = []
        for s in rows:
            if s.step not in tail:
                continue
            losses.append(s.loss)
            if s.step not in seen:
                seen.add(s.step)
                if s.grad_norm_ratio is not None:
                    ratios.append(s.grad_norm_ratio)
        out[strategy] = {
            "n_updates": float(n_tail),
            "ratio_median": float(np.median(ratios)) if ratios else None,
            "ratio_mean": float(np.mean(ratios)) if ratios else None,
            "ratio_max": float(np.max(ratios)) if ratios else None,
            "loss_median": float(np.median(losses)),
            "loss_mean": float(np.mean(losses)),
            "loss_max": float(np.max(losses)),
        }
    return out
