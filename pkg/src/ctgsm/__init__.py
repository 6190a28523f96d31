"""Rare-attack intrusion detection: tabular GAN augmentation, SMOTEENN resampling
and a focal-loss feed-forward classifier, built on numpy alone."""

from .data import DataError, Dataset, SchemaError
from .pipeline import ConfigError, PipelineConfig, desk_config, run_pipeline

__all__ = ["ConfigError", "DataError", "Dataset", "PipelineConfig", "SchemaError", "desk_config", "run_pipeline"]
__version__ = "0.1.0"
