"""Question-type prior knowledge and multi-hypothesis interaction learning for VQA."""

from .config import ConfigError, TrainConfig
from .data import DatasetBundle, SynthRule, gen_synthetic, load_dataset, write_dataset
from .prior import PriorMatrix, awareness, compute_prior
from .trainer import evaluate, load_checkpoint, predict, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "TrainConfig", "DatasetBundle", "SynthRule", "gen_synthetic", "load_dataset",
    "write_dataset", "PriorMatrix", "awareness", "compute_prior", "evaluate", "load_checkpoint",
    "predict", "save_checkpoint", "train",
]
