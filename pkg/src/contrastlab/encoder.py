"""Toy parameterised encoders with explicit forward and backward passes.

Two kinds: a plain linear map and a one-hidden-layer tanh MLP. The query and
passage encoders of a run are two independent instances of this module; there
is no weight tying and representations are never length-normalised.
"""

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .numerics import Mat, Rng, as_mat, gaussian

LINEAR = "linear"
MLP = "mlp"
KINDS = (LINEAR, MLP)


@dataclass(frozen=True)
class EncoderState:
    """Parameters of one encoder. Treated as immutable; updates build a new state."""

    kind: str
    weights: tuple[Mat, ...]
    biases: tuple[Mat, ...]
    d_in: int
    d_model: int
    hidden: int | None = None

    def param_arrays(self) -> tuple[Mat, ...]:
        return self.weights + self.biases

    def with_param_arrays(self, arrays) -> "EncoderState":
        arrays = tuple(arrays)
        n_w = len(self.weights)
        return replace(self, weights=arrays[:n_w], biases=arrays[n_w:])


class GradBuffer(NamedTuple):
    """Per-parameter gradients, shape-congruent with an EncoderState."""

    weights: tuple
    biases: tuple

    def arrays(self) -> tuple[Mat, ...]:
        return self.weights + self.biases


@dataclass(frozen=True)
class ForwardTape:
    """Activations captured by a forward pass, needed to run backward."""

    inputs: Mat
    pre_activations: tuple[Mat, ...]
    activations: tuple[Mat, ...]


def init(rng: Rng, kind: str, d_in: int, d_model: int, hidden: int | None = None) -> EncoderState:
    """Gaussian weights with std 1/sqrt(fan_in), zero biases; deterministic per rng."""
    if kind not in KINDS:
        raise ValueError(f"unknown encoder kind {kind!r}; expected one of {KINDS}")
    if d_in < 1 or d_model < 1:
        raise ValueError("encoder widths must be >= 1")
    if kind == LINEAR:
        w = gaussian(rng, d_in, d_model, 1.0 / np.sqrt(d_in))
        return EncoderState(LINEAR, (w,), (np.zeros(d_model),), d_in, d_model)
    if hidden is None or hidden < 1:
        raise ValueError("mlp encoder needs hidden >= 1")
    w1 = gaussian(rng, d_in, hidden, 1.0 / np.sqrt(d_in))
    w2 = gaussian(rng, hidden, d_model, 1.0 / np.sqrt(hidden))
    return EncoderState(MLP, (w1, w2), (np.zeros(hidden), np.zeros(d_model)), d_in, d_model, hidden)


def forward(enc: EncoderState, inputs: Mat, capture: bool = False) -> tuple[Mat, ForwardTape | None]:
    """Encode a batch (rows are examples). Returns (reps, tape or None).

    The representations are identical whether or not activations are captured;
    capture only controls whether a tape for backward() is produced.
    """
    x = as_mat(inputs)
    if x.shape[1] != enc.d_in:
        raise ValueError(f"input width {x.shape[1]} does not match encoder d_in {enc.d_in}")
    if enc.kind == LINEAR:
        reps = x @ enc.weights[0] + enc.biases[0]
        tape = ForwardTape(x, (), ()) if capture else None
        return reps, tape
    pre = x @ enc.weights[0] + enc.biases[0]
    h = np.tanh(pre)
    reps = h @ enc.weights[1] + enc.biases[1]
    tape = ForwardTape(x, (pre,), (h,)) if capture else None
    return reps, tape


def backward(enc: EncoderState, tape: ForwardTape | None, upstream: Mat) -> GradBuffer:
    """Gradient of sum(upstream * reps) with respect to the encoder parameters.

    Additive over batch rows, so gradients of a concatenated batch equal the
    sum of gradients of its parts.
    """
    if tape is None:
        raise ValueError("backward requires a tape from forward(..., capture=True)")
    u = as_mat(upstream)
    if u.shape != (tape.inputs.shape[0], enc.d_model):
        raise ValueError(
            f"upstream shape {u.shape} does not match reps shape "
            f"({tape.inputs.shape[0]}, {enc.d_model})"
        )
    if enc.kind == LINEAR:
        dw = tape.inputs.T @ u
        db = u.sum(axis=0)
        return GradBuffer((dw,), (db,))
    h = tape.activations[0]
    dw2 = h.T @ u
    db2 = u.sum(axis=0)
    dh = u @ enc.weights[1].T
    dpre = dh * (1.0 - h * h)
    dw1 = tape.inputs.T @ dpre
    db1 = dpre.sum(axis=0)
    return GradBuffer((dw1, dw2), (db1, db2))


def grad_zeros(enc: EncoderState) -> GradBuffer:
    return GradBuffer(
        tuple(np.zeros_like(w) for w in enc.weights),
        tuple(np.zeros_like(b) for b in enc.biases),
    )


def grad_add(a: GradBuffer, b: GradBuffer) -> GradBuffer:
    return GradBuffer(
        tuple(x + y for x, y in zip(a.weights, b.weights)),
        tuple(x + y for x, y in zip(a.biases, b.biases)),
    )


def grad_scale(g: GradBuffer, c: float) -> GradBuffer:
    return GradBuffer(tuple(w * c for w in g.weights), tuple(b * c for b in g.biases))
