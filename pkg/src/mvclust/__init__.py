"""Multi-view deep clustering with weighted-mean fusion (SiMVC) and
selective contrastive alignment (CoMVC), built on a small numpy autodiff
engine."""

from .data import MultiViewDataset, generate_toy, load, save, toy_spec
from .errors import (DataFormatError, DomainError, MVCError, PropositionViolation, ShapeError,
                     TrainingError, UsageError)
from .losses import ContrastiveConfig
from .metrics import acc, nmi
from .model import ModelSpec, forward, init_model, load_checkpoint, predict, save_checkpoint
from .trainer import TrainConfig, train_once, train_protocol

__all__ = [
    "ContrastiveConfig", "DataFormatError", "DomainError", "MVCError", "ModelSpec", "MultiViewDataset",
    "PropositionViolation", "ShapeError", "TrainConfig", "TrainingError", "UsageError", "acc",
    "forward", "generate_toy", "init_model", "load", "load_checkpoint", "nmi", "predict", "save",
    "save_checkpoint", "toy_spec", "train_once", "train_protocol",
]
