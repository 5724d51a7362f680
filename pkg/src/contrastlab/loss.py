"""Similarity-matrix assembly, the contrastive loss, and its closed-form
gradients with respect to the current-batch representations.

The similarity view stacks current and banked representations:

    rows:    [ current queries | banked queries ]
    columns: [ current passages | banked passages | hard negatives ]

Row i's positive column is i for current rows; banked row j's positive is the
banked passage enqueued with it (pair alignment), so the banked block also has
a diagonal of positives. Hard-negative columns are nobody's positive. The loss
averages over all rows, banked ones included, but gradients are returned only
for the current-batch slices: banked and hard entries are constants.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import Mat, as_mat, empty_mat, matmul, row_log_softmax


@dataclass(frozen=True)
class SimilarityView:
    """Assembled logits over current + banked representations.

    logits holds raw dot products already divided by tau.
    """

    logits: Mat
    n_cur_q: int
    n_cur_p: int
    n_bank_q: int
    n_bank_p: int
    n_hard: int
    pos_col: np.ndarray
    tau: float

    @property
    def n_rows(self) -> int:
        return self.n_cur_q + self.n_bank_q

    @property
    def n_cols(self) -> int:
        return self.n_cur_p + self.n_bank_p + self.n_hard


@dataclass(frozen=True)
class LossGrad:
    """Loss value plus gradients for the current-batch representations only."""

    loss: float
    grad_q_cur: Mat
    grad_p_cur: Mat


def build_similarity(
    q_cur: Mat,
    p_cur: Mat,
    bank_q: Mat | None = None,
    bank_p: Mat | None = None,
    hard: Mat | None = None,
    tau: float = 1.0,
) -> SimilarityView:
    """Assemble the similarity view for one substep.

    bank_q/bank_p are snapshot matrices (may be None or 0-row). A non-empty
    query bank must be pair-aligned with an equally sized passage bank.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    q_cur = as_mat(q_cur)
    p_cur = as_mat(p_cur)
    d = q_cur.shape[1]
    bank_q = empty_mat(d) if bank_q is None else as_mat(bank_q)
    bank_p = empty_mat(d) if bank_p is None else as_mat(bank_p)
    hard = empty_mat(d) if hard is None else as_mat(hard)
    for name, m in (("p_cur", p_cur), ("bank_q", bank_q), ("bank_p", bank_p), ("hard", hard)):
        if m.shape[1] != d:
            raise ValueError(f"{name} width {m.shape[1]} does not match q_cur width {d}")
    n_bank_q, n_bank_p = bank_q.shape[0], bank_p.shape[0]
    if n_bank_q > 0 and n_bank_q != n_bank_p:
        raise ValueError(
            f"banked pair counts differ: {n_bank_q} queries vs {n_bank_p} passages"
        )
    q_all = np.vstack([q_cur, bank_q])
    p_all = np.vstack([p_cur, bank_p, hard])
    logits = matmul(q_all, p_all.T) / tau
    n_cur_q, n_cur_p = q_cur.shape[0], p_cur.shape[0]
    pos_col = np.concatenate(
        [np.arange(n_cur_q), n_cur_p + np.arange(n_bank_q)]
    ).astype(np.intp)
    return SimilarityView(logits, n_cur_q, n_cur_p, n_bank_q, n_bank_p, hard.shape[0], pos_col, tau)


def info_nce(view: SimilarityView) -> float:
    """Mean negative log softmax probability of each row's positive column."""
    log_probs = row_log_softmax(view.logits, 1.0)  # logits already carry 1/tau
    rows = np.arange(view.n_rows)
    return float(-log_probs[rows, view.pos_col].mean())


def rep_gradients(view: SimilarityView, q_all: Mat, p_all: Mat) -> LossGrad:
    """Closed-form loss gradients with respect to the stacked representations.

    With S the row softmax of the logits and Y the one-hot positive indicator,
    D = (S - Y) / (n_rows * tau) gives grad_Q = D @ p_all and
    grad_P = D.T @ q_all. Only the current-batch slices are returned; banked
    rows/columns and hard-negative columns are stop-gradient.
    """
    q_all = as_mat(q_all, rows=view.n_rows)
    p_all = as_mat(p_all, rows=view.n_cols)
    if q_all.shape[1] != p_all.shape[1]:
        raise ValueError(f"width mismatch: q_all {q_all.shape} vs p_all {p_all.shape}")
    log_probs = row_log_softmax(view.logits, 1.0)
    soft = np.exp(log_probs)
    rows = np.arange(view.n_rows)
    d = soft.copy()
    d[rows, view.pos_col] -= 1.0
    d /= view.n_rows * view.tau
    grad_q_all = d @ p_all
    grad_p_all = d.T @ q_all
    loss = float(-log_probs[rows, view.pos_col].mean())
    return LossGrad(loss, grad_q_all[: view.n_cur_q], grad_p_all[: view.n_cur_p])
