"""Dense float64 kernels and the seeded generator shared by every other module.

All arithmetic is 64-bit; softmax is always computed with max subtraction so
arbitrarily large logits stay finite.
"""

import math

import numpy as np

# A Mat is a 2-d float64 ndarray; a Rng is a numpy Generator backed by PCG64.
Mat = np.ndarray
Rng = np.random.Generator


class NonFiniteError(ValueError):
    """Raised when a kernel meets inf/nan values (a diverged run, typically)."""


def make_rng(seed: int, *streams: int) -> Rng:
    """Deterministic PCG64 generator for (seed, *streams).

    The same key tuple yields bitwise-identical streams on every platform.
    Extra stream keys derive independent generators from one experiment seed.
    """
    if seed < 0 or any(s < 0 for s in streams):
        raise ValueError("rng keys must be non-negative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *streams])))


def as_mat(values, rows: int | None = None, cols: int | None = None) -> Mat:
    """Coerce to a float64 2-d array, optionally checking the shape."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"expected {cols} cols, got {m.shape[1]}")
    return m


def matmul(a: Mat, b: Mat) -> Mat:
    """Dense product a @ b with an explicit shape check; the output must be finite."""
    a = as_mat(a)
    b = as_mat(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    if not np.isfinite(out).all():
        raise NonFiniteError("matmul: product overflowed to non-finite values")
    return out


def row_log_softmax(m: Mat, tau: float) -> Mat:
    """Row-wise log softmax of m / tau, stabilised by max subtraction.

    Every output row r satisfies logsumexp(r) == 0 to within 1e-12.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    m = as_mat(m)
    if not np.isfinite(m).all():
        raise NonFiniteError("row_log_softmax: input contains non-finite entries")
    z = m / tau
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def global_l2_norm(arrays) -> float:
    """Square root of the sum of squares of every entry across all arrays.

    Invariant to how the entries are partitioned into arrays; empty input
    gives 0.
    """
    total = 0.0
    for a in arrays:
        a = np.asarray(a, dtype=np.float64)
        total += float(np.sum(a * a))
    return math.sqrt(total)


def gaussian(rng: Rng, rows: int, cols: int, std: float) -> Mat:
    """rows x cols matrix of N(0, std^2) draws; std == 0 gives all zeros."""
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dims must be >= 1, got ({rows}, {cols})")
    return rng.normal(0.0, std, size=(rows, cols))


def empty_mat(cols: int) -> Mat:
    """A 0-row matrix of the given width (used for empty bank views)."""
    return np.zeros((0, cols), dtype=np.float64)
