"""Class-level unlearning for small dense classifiers.

Train a softmax MLP, then remove one class's influence by shifting the
decision boundary around the forgotten samples (shrink toward each sample's
nearest wrong class, or expand through a throwaway output neuron), with
retrain-from-scratch and finetuning baselines, membership-inference and
decision-region evaluation, and a reproducible experiment harness.
"""

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .datasets import (
    CountingSplit,
    ForgetSplit,
    LabeledDataset,
    forget_split,
    load_csv,
    make_blobs,
)
from .experiment import (
    ExperimentConfig,
    StageError,
    load_config,
    parse_config_text,
    report_run,
    run_experiment,
)
from .metrics import (
    EvalReport,
    MIAConfig,
    MiaResult,
    RegionRaster,
    accuracy,
    compare_methods,
    decision_region_area,
    mia_asr,
    on_boundary,
    output_entropy,
    region_bounds,
)
from .network import DenseClassifier, SGDConfig, cross_entropy, softmax
from .unlearn import (
    METHODS,
    ShrinkConfig,
    UnlearnResult,
    boundary_expanding,
    boundary_shrink,
    finetune_baseline,
    nearest_incorrect_labels,
    negative_gradient_baseline,
    neighbor_search,
    random_labels_baseline,
    retrain,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointFormatError",
    "CountingSplit",
    "DenseClassifier",
    "EvalReport",
    "ExperimentConfig",
    "ForgetSplit",
    "LabeledDataset",
    "METHODS",
    "MIAConfig",
    "MiaResult",
    "RegionRaster",
    "SGDConfig",
    "ShrinkConfig",
    "StageError",
    "UnlearnResult",
    "accuracy",
    "boundary_expanding",
    "boundary_shrink",
    "compare_methods",
    "cross_entropy",
    "decision_region_area",
    "finetune_baseline",
    "forget_split",
    "load_checkpoint",
    "load_config",
    "load_csv",
    "make_blobs",
    "mia_asr",
    "nearest_incorrect_labels",
    "negative_gradient_baseline",
    "neighbor_search",
    "on_boundary",
    "output_entropy",
    "parse_config_text",
    "random_labels_baseline",
    "region_bounds",
    "report_run",
    "retrain",
    "run_experiment",
    "save_checkpoint",
    "softmax",
]
