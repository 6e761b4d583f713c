"""Online bilevel optimization benchmark: algorithms, hypergradients, metrics."""

from .core import (
    ALGORITHMS,
    CappedLoopError,
    DerivedConstants,
    HyperParams,
    ParameterDomainError,
    SmoothnessConstants,
    UnsupportedCapability,
    default_schedule,
    derive_constants,
)
from .geometry import ConstraintSet, ball, box, gradient_mapping, project, unconstrained
from .optimizers import OptimizerState, RunRecord, StepReport, run
from .problems import (
    DriftPath,
    ProblemInstance,
    make_block_sigmoid_adversary,
    make_drifting_quadratic,
    make_hypercleaning_synthetic,
    make_window_adversary,
)

__version__ = "0.1.0"
