"""Group-aware Bayesian multiple testing with posterior error rates and rate diagnostics."""

from .core import (
    DecisionConfig,
    GroupStructure,
    Hypothesis,
    HypothesisSet,
    PosteriorSampleSet,
    additive_rule,
    brute_force_decision,
    optimize_decision,
)
from .kernels import active_kernel_name

__version__ = "0.1.0"

__all__ = [
    "DecisionConfig",
    "GroupStructure",
    "Hypothesis",
    "HypothesisSet",
    "PosteriorSampleSet",
    "additive_rule",
    "brute_force_decision",
    "optimize_decision",
    "active_kernel_name",
    "__version__",
]
