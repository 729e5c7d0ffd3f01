"""Rank-weighted supervised contrastive learning for time series classification.

The library trains a small fully convolutional encoder with a
rank-supervised contrastive loss (sigmoid-relaxed negative counts mapped
through arctan), augments batches by jittering embeddings on the unit
hypersphere, and evaluates frozen representations with an RBF-kernel SVM.
"""

from .augment import AugmentConfig, expand_batch, jitter
from .data import (BatchPlan, NormStats, TimeSeriesDataset, batch_indices,
                   clean_missing, load_delimited, load_multivariate_jsonl,
                   save_delimited, save_multivariate_jsonl, znormalize)
from .evaluation import (MetricsReport, SvmModel, metrics, predict, rbf_kernel,
                         svm_fit_binary, svm_fit_select)
from .exceptions import (CheckpointError, ConfigError, ContractError,
                         DataFormatError, DimensionError, NumericError)
from .layers import AdamState, BatchNormState, adam_step
from .model import (EmbeddingBatch, EncoderConfig, ModelState, encode,
                    init_model, load_checkpoint, project, save_checkpoint)
from .rankloss import (DistanceMatrix, RankComputation, RankLossConfig,
                       hard_rank, pairwise_distances, rank_loss, soft_rank,
                       valid_triplets)
from .synthetic import make_control_chart_dataset, make_sine_dataset
from .training import train_encoder

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AugmentConfig", "BatchNormState", "BatchPlan",
    "CheckpointError", "ConfigError", "ContractError", "DataFormatError",
    "DimensionError", "DistanceMatrix", "EmbeddingBatch", "EncoderConfig",
    "MetricsReport", "ModelState", "NormStats", "NumericError",
    "RankComputation", "RankLossConfig", "SvmModel", "TimeSeriesDataset",
    "adam_step", "batch_indices", "clean_missing", "encode", "expand_batch",
    "hard_rank", "init_model", "jitter", "load_checkpoint", "load_delimited",
    "load_multivariate_jsonl", "make_control_chart_dataset",
    "make_sine_dataset", "metrics", "pairwise_distances", "predict",
    "project", "rank_loss", "rbf_kernel", "save_checkpoint", "save_delimited",
    "save_multivariate_jsonl", "soft_rank", "svm_fit_binary",
    "svm_fit_select", "train_encoder", "valid_triplets", "znormalize",
]
