"""Spatio-temporal hypergraph soft sensor on a small numpy autodiff core."""

from .data import SensorSeries, Standardizer, SynthConfig, load_csv, synth_generate, write_csv
from .estimator import KNNHypergraph, RidgeWindowRegressor, STHCSSRegressor, chronological_split
from .exceptions import (ConfigError, DimensionError, DivergenceError, FormatError, NumericalError,
                         STHCSSError)
from .hypergraph import build_hypergraph, normalized_adjacency, spectral_filter
from .model import ModelConfig, init_params, load_checkpoint, predict, save_checkpoint
from .training import TrainConfig, compute_metrics, hyperparameter_sweep, run_experiment, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DimensionError", "DivergenceError", "FormatError", "KNNHypergraph",
    "ModelConfig", "NumericalError", "RidgeWindowRegressor", "STHCSSError", "STHCSSRegressor",
    "SensorSeries", "Standardizer", "SynthConfig", "TrainConfig", "build_hypergraph",
    "chronological_split", "compute_metrics", "hyperparameter_sweep", "init_params", "load_checkpoint",
    "load_csv", "normalized_adjacency", "predict", "run_experiment", "save_checkpoint",
    "spectral_filter", "synth_generate", "train", "write_csv",
]
