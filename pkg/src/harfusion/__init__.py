"""Two-level dual-branch networks with late and intermediate feature fusion
for inertial-sensor activity recognition, built from scratch on numpy.

Quick tour:

>>> from harfusion import Rng, ModelConfig, NetKind, build_model
>>> cfg = ModelConfig(NetKind.CNN1D, NetKind.CNN1D, intermediate_fusion=True,
...                   input_kind="single-feature-vector", class_count=6)
>>> model = build_model(cfg, Rng(0))

See the demos/ directory for walkthroughs of every capability and the
``harfusion`` command line for dataset preparation, training, and the
architecture grid.
"""

from . import data, errors, evaluate, gradcheck, layers, model, optim, tensor
from .data import (FeatureSample, FoldSplit, Recording, kfold_split,
                   lowpass_filter, normalize, parse_canonical_csv,
                   parse_ucihar_features, parse_ucihar_raw, reshape_for_model,
                   standardize_length)
from .evaluate import (FixedSplitDataset, FoldedDataset, RunReport, accuracy,
                       confusion, emit_report, per_class_accuracy, run_grid,
                       run_single)
from .gradcheck import (GradCheckReport, grad_check, grad_check_model,
                        layer_suite, stage_suite)
from .model import (ModelConfig, NetKind, build_model, enumerate_architectures,
                    load_checkpoint, save_checkpoint)
from .optim import (LabeledData, TrainConfig, TrainHistory, adam_step,
                    batch_size, evaluate as evaluate_model, train)
from .tensor import Rng

__all__ = [
    "FeatureSample", "FixedSplitDataset", "FoldSplit", "FoldedDataset",
    "GradCheckReport", "LabeledData", "ModelConfig", "NetKind", "Recording",
    "Rng", "RunReport", "TrainConfig", "TrainHistory", "accuracy", "adam_step",
    "batch_size", "build_model", "confusion", "data", "emit_report",
    "enumerate_architectures", "errors", "evaluate", "evaluate_model",
    "grad_check", "grad_check_model", "gradcheck", "kfold_split",
    "layer_suite", "layers", "load_checkpoint", "lowpass_filter", "model",
    "normalize", "optim", "parse_canonical_csv", "parse_ucihar_features",
    "parse_ucihar_raw", "per_class_accuracy", "reshape_for_model", "run_grid",
    "run_single", "save_checkpoint", "stage_suite", "standardize_length",
    "tensor", "train",
]
__version__ = "0.1.0"
