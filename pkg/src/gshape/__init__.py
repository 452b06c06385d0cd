"""Geometric constellation shaping with jointly learned bit labelings.

Learns constellation geometries and labelings end-to-end against a
moment-dependent Gaussian surrogate of an amplified fiber link, and measures
the results with Monte-Carlo MI/GMI estimators, quadrature oracles, shaping
baselines and launch-power/distance sweeps.
"""

from .channel import ChannelParams, LinkBudget, NlinCoeffs
from .constellation import (
    Constellation,
    Moments,
    Pmf,
    gray_penalty,
    maxwell_boltzmann,
    moments,
    normalize_power,
    square_qam,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    GshapeError,
    ParseError,
    TrainingError,
    UnsupportedOrderError,
)
from .infometrics import AuxChannel, MetricsReport, evaluate
from .autoenc import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "AuxChannel",
    "ChannelParams",
    "ConfigError",
    "Constellation",
    "DegenerateInputError",
    "GshapeError",
    "LinkBudget",
    "MetricsReport",
    "Moments",
    "NlinCoeffs",
    "ParseError",
    "Pmf",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "UnsupportedOrderError",
    "evaluate",
    "gray_penalty",
    "maxwell_boltzmann",
    "moments",
    "normalize_power",
    "square_qam",
    "train",
    "__version__",
]
