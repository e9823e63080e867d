"""Hierarchical survival network: autodiff tape, architecture, training,
and the hour-by-hour prediction replay."""

from .autodiff import Tensor, as_tensor, concat, embedding, parameter, softmax
from .network import (
    LossBreakdown,
    LossWeights,
    ModelConfig,
    SurvivalTrace,
    batch_loss,
    forward_prefix,
    forward_survival,
    init_params,
    losses,
    survival_trace,
)
from .predict import StreamResult, first_consistent_split, pad_columns, predict_stream
from .training import (
    Adam,
    TrainConfig,
    TrainInputs,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history_csv,
)

__all__ = [
    "Adam",
    "LossBreakdown",
    "LossWeights",
    "ModelConfig",
    "StreamResult",
    "SurvivalTrace",
    "Tensor",
    "TrainConfig",
    "TrainInputs",
    "as_tensor",
    "batch_loss",
    "concat",
    "embedding",
    "first_consistent_split",
    "forward_prefix",
    "forward_survival",
    "init_params",
    "load_checkpoint",
    "losses",
    "pad_columns",
    "parameter",
    "predict_stream",
    "save_checkpoint",
    "softmax",
    "survival_trace",
    "train",
    "write_history_csv",
]
