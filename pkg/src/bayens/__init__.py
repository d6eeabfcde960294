"""Online classifier-ensemble weight estimation.

Recursive Bayesian posterior-mean weights over a pool of online weak
learners, SGD-family baselines over the same losses, a prequential benchmark
harness for LIBSVM-format datasets, and Monte Carlo checks of the
estimators' convergence behavior.
"""

from .data import Dataset, Sample, SplitPlan, load_dataset, ordering, parse_libsvm, split
from .errors import (
    BayensError,
    ConfigError,
    EmptyDatasetError,
    ParseError,
    QuadratureError,
)
from .harness import ExperimentConfig, TrialRecord, run_experiment, run_trial
from .posterior import GammaPosterior, QuadratureSpec, ShapePosterior, ShapeRatePosterior
from .weak import WeakPool, build_pool

__version__ = "0.1.0"

__all__ = [
    "BayensError",
    "ConfigError",
    "Dataset",
    "EmptyDatasetError",
    "ExperimentConfig",
    "GammaPosterior",
    "ParseError",
    "QuadratureError",
    "QuadratureSpec",
    "Sample",
    "ShapePosterior",
    "ShapeRatePosterior",
    "SplitPlan",
    "TrialRecord",
    "WeakPool",
    "__version__",
    "build_pool",
    "load_dataset",
    "ordering",
    "parse_libsvm",
    "run_experiment",
    "run_trial",
    "split",
]
