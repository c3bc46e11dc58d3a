"""Rare-class detection across domains with an expert-knowledge override.

The staged model finds the rarest class by k-NN entropy, pairs it with its
most similar (overlap) class, and lets a knowledge machine overturn the
data-driven "overlap" verdict when it is confident enough.
"""

__version__ = "0.1.0"

from .data import Dataset, Observation, load_embeddings, save_embeddings
from .errors import (ConfigError, DegenerateClassError, FormatError, NoRareClassError,
                     NotTrainedError, RareSaGeError, StratificationError, TrainingError,
                     UndefinedSparsityError, ValidationError)
from .labels import LabelSet, SuperLabel, validate_label_set
from .machines import Machine, MachineSpec, TrainConfig, orchestrate, train
from .pipeline import PipelineConfig, RareSaGeModel, fit, fuse, load_model, save_model
from .rarity import class_entropy, entropy_profile, find_overlap_class, identify_rare

__all__ = [
    "Dataset", "Observation", "load_embeddings", "save_embeddings", "ConfigError",
    "DegenerateClassError", "FormatError", "NoRareClassError", "NotTrainedError",
    "RareSaGeError", "StratificationError", "TrainingError", "UndefinedSparsityError",
    "ValidationError", "LabelSet", "SuperLabel", "validate_label_set", "Machine",
    "MachineSpec", "TrainConfig", "orchestrate", "train", "PipelineConfig",
    "RareSaGeModel", "fit", "fuse", "load_model", "save_model", "class_entropy",
    "entropy_profile", "find_overlap_class", "identify_rare",
]
