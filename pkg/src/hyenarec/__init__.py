"""Sequential next-item recommendation with Legendre-parameterized long convolutions."""

from .data import SequenceDataset, load_dataset, load_log, preprocess, synth_copy_task
from .errors import ConfigError, DataError, DataFormatError, HyenaRecError, NumericalError
from .evaluation import evaluate, ndcg_at_k, rank_target, recall_at_k
from .filters import FilterBank, build_kernels, energy_curve, legendre_basis, make_basis
from .model import HyenaConfig, HyenaRecModel, load_model, save_model
from .operator import CausalSelfAttention, HyenaOperator
from .train import AdamW, TrainConfig, Trainer, fit, grid_search

__version__ = "0.1.0"

__all__ = [
    "AdamW", "CausalSelfAttention", "ConfigError", "DataError", "DataFormatError", "FilterBank",
    "HyenaConfig", "HyenaOperator", "HyenaRecError", "HyenaRecModel", "NumericalError",
    "SequenceDataset", "TrainConfig", "Trainer", "build_kernels", "energy_curve", "evaluate",
    "fit", "grid_search", "legendre_basis", "load_dataset", "load_log", "load_model",
    "make_basis", "ndcg_at_k", "preprocess", "rank_target", "recall_at_k", "save_model",
    "synth_copy_task",
]
