"""Training laboratory for layer-selective gradient amplification."""

from .config import DatasetSpec, NetworkSpec, RunConfig, config_from_dict, load_run_config
from .data import Dataset, SplitSpec, gen_synthetic, load_csv_dataset, split_and_batch
from .errors import ConfigError, NonFiniteError, ShapeError
from .gradstats import GradientAccumulator, LayerRatios, zscores
from .nn import BatchNorm, Dense, Network, ReLU, build_mlp, loss_softmax_ce, sgd_step
from .schedule import PhaseSpec, TrainingStrategy, parse_strategy
from .selection import AmpSet, SelectionPolicy, select_layers
from .trainer import (
    RunReport,
    TrainingDiverged,
    apply_amplification,
    evaluate,
    run_training,
    train_one_epoch,
    write_run_report,
)

__version__ = "0.1.0"

__all__ = [
    "AmpSet",
    "BatchNorm",
    "ConfigError",
    "Dataset",
    "DatasetSpec",
    "Dense",
    "GradientAccumulator",
    "LayerRatios",
    "Network",
    "NetworkSpec",
    "NonFiniteError",
    "PhaseSpec",
    "ReLU",
    "RunConfig",
    "RunReport",
    "SelectionPolicy",
    "ShapeError",
    "SplitSpec",
    "TrainingDiverged",
    "TrainingStrategy",
    "apply_amplification",
    "build_mlp",
    "config_from_dict",
    "evaluate",
    "gen_synthetic",
    "load_csv_dataset",
    "load_run_config",
    "loss_softmax_ce",
    "parse_strategy",
    "run_training",
    "select_layers",
    "sgd_step",
    "split_and_batch",
    "train_one_epoch",
    "write_run_report",
    "zscores",
]
