"""Dual FIFO memory banks for query and passage representations.

Entries are pair-enqueued so the banked block of the similarity matrix keeps
a diagonal of true positives. Banked rows are plain value copies: nothing in
the system can route a gradient through them. Only positive pairs are ever
enqueued; hard negatives stay out of the banks.
"""

from collections import deque

import numpy as np

from .numerics import Mat, as_mat, empty_mat


class DualMemoryBank:
    """Capacity-bounded FIFO queues of (representation row, born substep).

    A bank is owned by one training loop; snapshots are immutable copies.
    When both capacities are positive they must be equal and entries stay
    pair-aligned. cap_q == 0 with cap_p > 0 is the passage-only configuration.
    """

    def __init__(self, cap_q: int, cap_p: int, d_model: int):
        if cap_q < 0 or cap_p < 0:
            raise ValueError("bank capacities must be >= 0")
        if cap_q > 0 and cap_q != cap_p:
            raise ValueError(
                f"a query bank must be pair-aligned with an equal passage bank, "
                f"got cap_q={cap_q}, cap_p={cap_p}"
            )
        if d_model < 1:
            raise ValueError("d_model must be >= 1")
        self.cap_q = cap_q
        self.cap_p = cap_p
        self.d_model = d_model
        self.query_bank_enabled = True
        self._q: deque = deque(maxlen=cap_q)
        self._p: deque = deque(maxlen=cap_p)

    def __len__(self) -> int:
        return len(self._p)

    @property
    def fill_q(self) -> int:
        return len(self._q)

    @property
    def fill_p(self) -> int:
        return len(self._p)

    def enqueue_pairs(self, q_reps: Mat, p_reps: Mat, step: int) -> None:
        """Append pair rows born at `step`; oldest entries are evicted to capacity."""
        q_reps = as_mat(q_reps)
        p_reps = as_mat(p_reps)
        if q_reps.shape[0] != p_reps.shape[0]:
            raise ValueError(
                f"pair enqueue needs equal row counts, got {q_reps.shape[0]} vs {p_reps.shape[0]}"
            )
        if q_reps.shape[1] != self.d_model or p_reps.shape[1] != self.d_model:
            raise ValueError(
                f"representation width must be {self.d_model}, got "
                f"{q_reps.shape[1]} and {p_reps.shape[1]}"
            )
        store_q = self.cap_q > 0 and self.query_bank_enabled
        for i in range(q_reps.shape[0]):
            if store_q:
                self._q.append((q_reps[i].copy(), step))
            if self.cap_p > 0:
                self._p.append((p_reps[i].copy(), step))

    def snapshot(self, step: int) -> tuple[Mat, Mat, list[int]]:
        """Immutable copies ordered oldest to newest, plus entry ages.

        Ages are step - born_step per passage entry (query entries, when
        present, are pair-aligned and share them).
        """
        if self._q and self.query_bank_enabled:
            m_q = np.array([row for row, _ in self._q])
        else:
            m_q = empty_mat(self.d_model)
        if self._p:
            m_p = np.array([row for row, _ in self._p])
        else:
            m_p = empty_mat(self.d_model)
        ages = [step - born for _, born in self._p]
        return m_q, m_p, ages

    def set_query_bank_enabled(self, flag: bool) -> None:
        """Disable the query bank (one-way). Re-enabling raises."""
        if flag:
            if not self.query_bank_enabled:
                raise ValueError("re-enabling a disabled query bank is not supported")
            return
        if self.cap_q == 0:
            return  # nothing to disable
        self.query_bank_enabled = False
        self._q.clear()

    def clear(self) -> None:
        """Drop all entries; capacities and the enabled flag are unchanged."""
        self._q.clear()
        self._p.clear()


def byte_usage(n_memory: int, d_model: int) -> int:
    """Theoretical bank footprint in bytes: n_memory * d_model * 2 * 4.

    The 2 counts the query and passage banks, the 4 is full-precision bytes
    per value. This is an accounting formula, independent of the dtype the
    arrays actually use in memory.
    """
    if n_memory < 0 or d_model < 0:
        raise ValueError("byte_usage arguments must be >= 0")
    return n_memory * d_model * 2 * 4
