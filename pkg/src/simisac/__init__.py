"""Stacked-metasurface wave-domain precoding for joint communication and sensing.

A transmitter made of stacked programmable metasurface layers shapes the
radiated field of a small antenna array so that K downlink users are served
with low inter-user interference while a radar target direction receives a
required beampattern gain.  The package provides the physical model
(diffraction matrices, correlated fading channels, steering vectors), the
penalty-augmented objective with analytic gradients, a projected gradient
ascent optimizer, an sklearn-style estimator wrapper, and a CLI for seeded,
reproducible experiments.
"""

from .scenario import (
    SPEED_OF_LIGHT,
    GeometryLayout,
    ScenarioConfig,
    ScenarioError,
    build_geometry,
    dbm_to_watts,
    watts_to_dbm,
)
from .propagation import PropagationSet, build_propagation, rs_coefficient
from .channel import (
    ChannelSet,
    build_channel,
    correlation_sqrt,
    path_loss,
    sample_channels,
    spatial_correlation,
)
from .wavefield import (
    SimState,
    beampattern_gain,
    covariance,
    phase_matrix,
    steering_vector,
    transfer_function,
)
from .objective import (
    GradientPair,
    ObjectiveReport,
    evaluate_objective,
    fd_gradient,
    grad_phase,
    grad_power,
    gradient,
    sinr,
)
from .optimizer import (
    IterationRecord,
    OptimizerTrace,
    armijo_update,
    init_multistart,
    normalize_gradients,
    optimize,
    project_power,
    water_filling,
)
from .estimator import SimIsacPrecoder

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT",
    "ScenarioConfig",
    "ScenarioError",
    "GeometryLayout",
    "build_geometry",
    "dbm_to_watts",
    "watts_to_dbm",
    "PropagationSet",
    "build_propagation",
    "rs_coefficient",
    "ChannelSet",
    "build_channel",
    "correlation_sqrt",
    "path_loss",
    "sample_channels",
    "spatial_correlation",
    "SimState",
    "phase_matrix",
    "transfer_function",
    "covariance",
    "steering_vector",
    "beampattern_gain",
    "ObjectiveReport",
    "GradientPair",
    "sinr",
    "evaluate_objective",
    "gradient",
    "grad_phase",
    "grad_power",
    "fd_gradient",
    "water_filling",
    "project_power",
    "normalize_gradients",
    "init_multistart",
    "armijo_update",
    "optimize",
    "OptimizerTrace",
    "IterationRecord",
    "SimIsacPrecoder",
    "__version__",
]
