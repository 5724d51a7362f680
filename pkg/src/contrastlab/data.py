"""Synthetic retrieval task with planted relevance, static hard negatives,
and exact full-corpus retrieval evaluation.

Each training pair shares a latent vector rendered into query space and
passage space by two fixed projections plus gaussian noise. The corpus holds
every positive passage followed by distractors drawn from fresh latents.
An optional common shift of the latent distribution makes representations
anisotropic, mimicking the shared-direction geometry of real text encoders.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import encoder
from .numerics import Mat, Rng

TASK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SyntheticTask:
    latent_dim: int
    d_in: int
    noise_std: float
    latent_shift: float
    proj_q: Mat
    proj_p: Mat
    query_inputs: Mat
    pos_inputs: Mat
    corpus_inputs: Mat
    positive_index: np.ndarray
    hard_negative_index: np.ndarray | None = None

    @property
    def n_train(self) -> int:
        return self.query_inputs.shape[0]

    @property
    def n_corpus(self) -> int:
        return self.corpus_inputs.shape[0]


@dataclass(frozen=True)
class Batch:
    """Sampled training pairs, plus one hard-negative input per query if mined."""

    q_inputs: Mat
    p_inputs: Mat
    hard_inputs: Mat | None = None

    @property
    def n_pairs(self) -> int:
        return self.q_inputs.shape[0]


def render_inputs(latents: Mat, proj: Mat, rng: Rng, noise_std: float) -> Mat:
    """Project latents into input space and add isotropic gaussian noise."""
    clean = latents @ proj
    if noise_std == 0:
        return clean
    return clean + rng.normal(0.0, noise_std, size=clean.shape)


def generate_task(
    rng: Rng,
    latent_dim: int,
    d_in: int,
    n_train: int,
    n_corpus: int,
    noise_std: float,
    latent_shift: float = 0.0,
) -> SyntheticTask:
    """Build a task: n_train query/positive pairs inside an n_corpus passage set.

    latent_shift displaces every latent by that length along the all-ones
    direction, giving the inputs (and hence the representations) a common
    mean component; 0 keeps the latents centered.
    """
    if n_corpus < n_train:
        raise ValueError(f"n_corpus ({n_corpus}) must be >= n_train ({n_train})")
    if latent_dim < 1 or d_in < 1 or n_train < 1:
        raise ValueError("latent_dim, d_in and n_train must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    shift = latent_shift / math.sqrt(latent_dim)
    proj_q = rng.normal(0.0, 1.0 / math.sqrt(latent_dim), size=(latent_dim, d_in))
    proj_p = rng.normal(0.0, 1.0 / math.sqrt(latent_dim), size=(latent_dim, d_in))
    latents = rng.normal(0.0, 1.0, size=(n_train, latent_dim)) + shift
    query_inputs = render_inputs(latents, proj_q, rng, noise_std)
    pos_inputs = render_inputs(latents, proj_p, rng, noise_std)
    n_extra = n_corpus - n_train
    if n_extra > 0:
        extra_latents = rng.normal(0.0, 1.0, size=(n_extra, latent_dim)) + shift
        distractors = render_inputs(extra_latents, proj_p, rng, noise_std)
        corpus = np.vstack([pos_inputs, distractors])
    else:
        corpus = pos_inputs.copy()
    return SyntheticTask(
        latent_dim=latent_dim,
        d_in=d_in,
        noise_std=noise_std,
        latent_shift=latent_shift,
        proj_q=proj_q,
        proj_p=proj_p,
        query_inputs=query_inputs,
        pos_inputs=pos_inputs,
        corpus_inputs=corpus,
        positive_index=np.arange(n_train, dtype=np.intp),
    )


def mine_hard_negatives(task: SyntheticTask) -> SyntheticTask:
    """Static hard negatives: per query, the non-positive corpus passage with
    maximal input-space cosine to the positive; ties break to the lowest index.
    Idempotent."""
    norms = np.linalg.norm(task.corpus_inputs, axis=1)
    unit_corpus = task.corpus_inputs / np.where(norms > 0, norms, 1.0)[:, None]
    pos_norms = np.linalg.norm(task.pos_inputs, axis=1)
    unit_pos = task.pos_inputs / np.where(pos_norms > 0, pos_norms, 1.0)[:, None]
    cos = unit_pos @ unit_corpus.T
    cos[np.arange(task.n_train), task.positive_index] = -np.inf
    hard = np.argmax(cos, axis=1).astype(np.intp)  # argmax takes the first max
    return replace(task, hard_negative_index=hard)


def sample_batch(task: SyntheticTask, rng: Rng, n: int, with_hard: bool = False) -> Batch:
    """n distinct pairs without replacement; deterministic for a given rng state."""
    if n > task.n_train:
        raise ValueError(f"cannot sample {n} pairs from {task.n_train} training pairs")
    if with_hard and task.hard_negative_index is None:
        raise ValueError("hard negatives requested but none are mined on this task")
    idx = rng.choice(task.n_train, size=n, replace=False)
    hard = None
    if with_hard:
        hard = task.corpus_inputs[task.hard_negative_index[idx]]
    return Batch(task.query_inputs[idx], task.pos_inputs[idx], hard)


def evaluate(enc_q, enc_p, task: SyntheticTask, ks) -> dict[str, float]:
    """Exact dot-product ranking of the full corpus for every training query.

    Returns top@k, recall@k and ndcg@k for each k. With one positive per
    query recall@k equals top@k; ndcg uses binary relevance, 1/log2(1+rank)
    when the positive ranks within k, else 0. Score ties rank the lower
    corpus index first.
    """
    ks = tuple(int(k) for k in ks)
    if not ks:
        raise ValueError("ks must be non-empty")
    if any(k < 1 or k > task.n_corpus for k in ks):
        raise ValueError(f"each k must be in [1, {task.n_corpus}], got {ks}")
    q_reps, _ = encoder.forward(enc_q, task.query_inputs)
    c_reps, _ = encoder.forward(enc_p, task.corpus_inputs)
    scores = q_reps @ c_reps.T
    n = task.n_train
    pos = task.positive_index
    pos_scores = scores[np.arange(n), pos]
    higher = (scores > pos_scores[:, None]).sum(axis=1)
    col_idx = np.arange(task.n_corpus)
    tied_before = ((scores == pos_scores[:, None]) & (col_idx[None, :] < pos[:, None])).sum(axis=1)
    rank = 1 + higher + tied_before
    out: dict[str, float] = {}
    for k in ks:
        hit = rank <= k
        out[f"top@{k}"] = float(hit.mean())
        out[f"recall@{k}"] = float(hit.mean())
        out[f"ndcg@{k}"] = float(np.where(hit, 1.0 / np.log2(1.0 + rank), 0.0).mean())
    return out


def save_task(task: SyntheticTask, path) -> None:
    """Write a task as a versioned .npz archive (replayable, self-describing)."""
    arrays = {
        "format_version": np.array(TASK_FORMAT_VERSION, dtype=np.int64),
        "latent_dim": np.array(task.latent_dim, dtype=np.int64),
        "d_in": np.array(task.d_in, dtype=np.int64),
        "noise_std": np.array(task.noise_std, dtype=np.float64),
        "latent_shift": np.array(task.latent_shift, dtype=np.float64),
        "proj_q": task.proj_q,
        "proj_p": task.proj_p,
        "query_inputs": task.query_inputs,
        "pos_inputs": task.pos_inputs,
        "corpus_inputs": task.corpus_inputs,
        "positive_index": task.positive_index,
    }
    if task.hard_negative_index is not None:
        arrays["hard_negative_index"] = task.hard_negative_index
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_task(path) -> SyntheticTask:
    with np.load(path) as z:
        version = int(z["format_version"])
        if version != TASK_FORMAT_VERSION:
            raise ValueError(f"unsupported task format version {version}")
        hard = z["hard_negative_index"].astype(np.intp) if "hard_negative_index" in z.files else None
        return SyntheticTask(
            latent_dim=int(z["latent_dim"]),
            d_in=int(z["d_in"]),
            noise_std=float(z["noise_std"]),
            latent_shift=float(z["latent_shift"]),
            proj_q=z["proj_q"],
            proj_p=z["proj_p"],
            query_inputs=z["query_inputs"],
            pos_inputs=z["pos_inputs"],
            corpus_inputs=z["corpus_inputs"],
            positive_index=z["positive_index"].astype(np.intp),
            hard_negative_index=hard,
        )
