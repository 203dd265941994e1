"""Deterministic simulator for asynchronous distributed training policies.

The package models K learners pushing gradients to one parameter server
under different admission policies: fully asynchronous, bounded
staleness, learner-side momentum variants, a variance-reduced family, and
a white-list scheduler that blends every admitted gradient with a
server-side velocity refreshed once per round. Data is deliberately
non-IID across learners; the point of the scheduled policy is to stay
stable anyway.
"""

from .config import ConfigError, DatasetConfig, ExperimentConfig, parse_config
from .data import (
    Dataset,
    IdxCountMismatchError,
    IdxError,
    IdxMagicError,
    IdxTruncatedError,
    Shard,
    generate_synthetic,
    generate_synthetic_split,
    load_idx,
    partition_noniid,
    partition_partial,
    sample_batch,
)
from .engine import RunCapture, SpeedModel, run_experiment
from .metrics import RunResult, improvement, stability, stability_gain
from .models import Batch, ModelSpec, accuracy, gradient, init_params, loss
from .optim import Hyperparams, SvrgSnapshot, lr_at, momentum_step, no_momentum_eta, svrg_local_gradient
from .schedulers import (
    AsyncServer,
    GsgmServer,
    SchedulerProtocolError,
    SspServer,
    UpdateRecord,
    gsgm_svrg_round,
    local_momentum_wrap,
    parse_policy,
)

__version__ = "0.1.0"

__all__ = [
    "AsyncServer",
    "Batch",
    "ConfigError",
    "Dataset",
    "DatasetConfig",
    "ExperimentConfig",
    "GsgmServer",
    "Hyperparams",
    "IdxCountMismatchError",
    "IdxError",
    "IdxMagicError",
    "IdxTruncatedError",
    "ModelSpec",
    "RunCapture",
    "RunResult",
    "SchedulerProtocolError",
    "Shard",
    "SpeedModel",
    "SspServer",
    "SvrgSnapshot",
    "UpdateRecord",
    "accuracy",
    "generate_synthetic",
    "generate_synthetic_split",
    "gradient",
    "gsgm_svrg_round",
    "improvement",
    "init_params",
    "load_idx",
    "local_momentum_wrap",
    "loss",
    "lr_at",
    "momentum_step",
    "no_momentum_eta",
    "parse_config",
    "parse_policy",
    "partition_noniid",
    "partition_partial",
    "run_experiment",
    "sample_batch",
    "stability",
    "stability_gain",
    "svrg_local_gradient",
]
