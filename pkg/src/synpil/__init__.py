"""Gradient-free stacked autoencoder classifiers.

Layers are trained analytically (ridge or L1-regularized least squares on
the autoencoder reconstruction), labels are propagated backward through
pseudoinverses to build a second feature path, the two paths are fused
through a fixed random expansion with a ridge readout, and several such
classifiers trained on random subsets vote by mean score.
"""

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateInputError,
    DimensionError,
    MemberTrainingError,
    NumericalError,
    ResourceLimitError,
    SynpilError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataFormatError",
    "DegenerateInputError",
    "DimensionError",
    "MemberTrainingError",
    "NumericalError",
    "ResourceLimitError",
    "SynpilError",
    "__version__",
]
