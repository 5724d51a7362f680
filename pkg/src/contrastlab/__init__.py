"""Desk-scale laboratory for memory-constrained dual-encoder contrastive training."""

from .data import Batch, SyntheticTask, evaluate, generate_task, load_task, mine_hard_negatives, sample_batch, save_task
from .encoder import EncoderState, ForwardTape, GradBuffer, backward, forward, init
from .instrumentation import StepStats, aggregate, grad_norm_ratio, group_rows_by_age, sim_mass
from .loss import LossGrad, SimilarityView, build_similarity, info_nce, rep_gradients
from .membank import DualMemoryBank, byte_usage
from .numerics import gaussian, global_l2_norm, make_rng, matmul, row_log_softmax
from .strategies import (
    CONT_ACCUM,
    FULL_BATCH,
    GRAD_ACCUM,
    GRAD_CACHE,
    PRE_BATCH,
    StepOutcome,
    StrategyConfig,
    negative_count,
    run_step,
    step_contaccum,
    step_full_batch,
    step_grad_accum,
    step_grad_cache,
    step_prebatch,
    surpasses_total,
)
from .trainer import (
    MetricsLog,
    OptState,
    RunHooks,
    TrainConfig,
    clip_global,
    lr_at,
    optimizer_step,
    full_scale_profile,
    run_training,
)

__version__ = "0.1.0"
