import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from contrastlab.membank import DualMemoryBank, byte_usage
from contrastlab.numerics import gaussian, make_rng

D = 3


def rows(n, tag):
    # distinct recognisable rows: entry 0 carries the tag
    out = np.zeros((n, D))
    out[:, 0] = tag + np.arange(n)
    return out


def replay_oracle(enqueued, cap):
    """Suffix of the concatenated enqueue stream of length min(total, cap)."""
    stream = [row for batch in enqueued for row in batch]
    keep = stream[len(stream) - min(len(stream), cap) :]
    return np.array(keep) if keep else np.zeros((0, D))


def test_fifo_eviction_across_enqueues():
    bank = DualMemoryBank(4, 4, D)
    for i, tag in enumerate((0, 100, 200)):
        bank.enqueue_pairs(rows(2, tag), rows(2, tag + 50), step=i)
    _, m_p, _ = bank.snapshot(step=3)
    assert_allclose(m_p[:, 0], [150, 151, 250, 251])


def test_fifo_single_oversized_enqueue():
    bank = DualMemoryBank(4, 4, D)
    bank.enqueue_pairs(rows(6, 0), rows(6, 0), step=0)
    m_q, _, _ = bank.snapshot(step=1)
    assert_allclose(m_q[:, 0], [2, 3, 4, 5])


def test_passage_only_mode_ignores_queries():
    bank = DualMemoryBank(0, 3, D)
    bank.enqueue_pairs(rows(2, 0), rows(2, 10), step=0)
    m_q, m_p, _ = bank.snapshot(step=1)
    assert m_q.shape == (0, D)
    assert_allclose(m_p[:, 0], [10, 11])


def test_snapshot_empty_bank():
    bank = DualMemoryBank(4, 4, D)
    m_q, m_p, ages = bank.snapshot(step=0)
    assert m_q.shape == (0, D) and m_p.shape == (0, D) and ages == []


def test_snapshot_order_oldest_first():
    bank = DualMemoryBank(8, 8, D)
    bank.enqueue_pairs(rows(2, 0), rows(2, 0), step=0)
    bank.enqueue_pairs(rows(2, 10), rows(2, 10), step=1)
    m_q, _, _ = bank.snapshot(step=2)
    assert_allclose(m_q[:, 0], [0, 1, 10, 11])


def test_snapshot_is_a_copy():
    bank = DualMemoryBank(2, 2, D)
    bank.enqueue_pairs(rows(2, 0), rows(2, 0), step=0)
    m_q, _, _ = bank.snapshot(step=1)
    m_q[0, 0] = 999.0
    again, _, _ = bank.snapshot(step=1)
    assert again[0, 0] == 0.0


def test_ages_after_three_substeps():
    bank = DualMemoryBank(6, 6, D)
    for s in range(3):
        bank.enqueue_pairs(rows(2, s), rows(2, s), step=s)
    _, _, ages = bank.snapshot(step=3)
    assert ages == [3, 3, 2, 2, 1, 1]


@settings(deadline=None, max_examples=60)
@given(st.lists(st.integers(0, 5), min_size=0, max_size=10), st.integers(0, 8))
def test_contents_match_replay_oracle(sizes, cap):
    bank = DualMemoryBank(cap, cap, D)
    batches = []
    for s, n in enumerate(sizes):
        batch = gaussian(make_rng(s + 1, 7), max(n, 1), D, 1.0)[:n]
        batches.append(batch)
        if n:
            bank.enqueue_pairs(batch, batch, step=s)
    _, m_p, _ = bank.snapshot(step=len(sizes))
    assert_allclose(m_p, replay_oracle(batches, cap))


def test_enqueue_rejects_width_mismatch():
    bank = DualMemoryBank(2, 2, D)
    with pytest.raises(ValueError, match="width"):
        bank.enqueue_pairs(np.zeros((1, D + 1)), np.zeros((1, D + 1)), step=0)


def test_enqueue_rejects_row_count_mismatch():
    bank = DualMemoryBank(2, 2, D)
    with pytest.raises(ValueError, match="row"):
        bank.enqueue_pairs(np.zeros((2, D)), np.zeros((1, D)), step=0)


def test_query_bank_requires_pair_capacity():
    with pytest.raises(ValueError):
        DualMemoryBank(4, 2, D)
    with pytest.raises(ValueError):
        DualMemoryBank(4, 0, D)


def test_byte_usage_reference_values():
    assert byte_usage(128, 768) == 786_432
    assert byte_usage(512, 768) == 3_145_728
    assert byte_usage(0, 10_000) == 0
    assert round(byte_usage(128, 768) / 2**30, 4) == 0.0007
    assert round(byte_usage(512, 768) / 2**30, 4) == 0.0029


def test_byte_usage_linear():
    assert byte_usage(6, 7) == 2 * byte_usage(3, 7)
    assert byte_usage(6, 14) == 2 * byte_usage(6, 7)


def test_disable_query_bank_empties_later_views():
    bank = DualMemoryBank(4, 4, D)
    bank.enqueue_pairs(rows(2, 0), rows(2, 10), step=0)
    bank.set_query_bank_enabled(False)
    m_q, m_p, _ = bank.snapshot(step=1)
    assert m_q.shape == (0, D)
    assert m_p.shape == (2, D)  # passages retained
    bank.enqueue_pairs(rows(2, 20), rows(2, 30), step=1)
    m_q, m_p, _ = bank.snapshot(step=2)
    assert m_q.shape == (0, D) and m_p.shape == (4, D)


def test_reenable_is_an_error():
    bank = DualMemoryBank(4, 4, D)
    bank.set_query_bank_enabled(True)  # still enabled: no-op
    bank.set_query_bank_enabled(False)
    with pytest.raises(ValueError, match="re-enabl"):
        bank.set_query_bank_enabled(True)


def test_disable_is_noop_without_query_capacity():
    bank = DualMemoryBank(0, 3, D)
    bank.set_query_bank_enabled(False)
    assert bank.query_bank_enabled  # nothing changed
    bank.set_query_bank_enabled(True)


def test_clear_keeps_capacity_and_flag():
    bank = DualMemoryBank(4, 4, D)
    bank.enqueue_pairs(rows(2, 0), rows(2, 0), step=0)
    bank.clear()
    assert len(bank) == 0 and bank.cap_q == 4 and bank.query_bank_enabled
