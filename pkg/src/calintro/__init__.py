"""Interval-calibrated prediction with latent counterfactual introspection.

Desk-scale pipeline: a procedural lesion-like dataset with known generative
factors, a decorrelating autoencoder for latent features, an alternating
interval-calibration trainer with a cross-entropy baseline, reliability
(deferral) evaluation, and gradient-based counterfactual evidence search,
all exposed through a CLI and an HTTP JSON API.
"""

from .errors import (CalintroError, CheckpointError, ConfigError, NumericalError,
                     ParseError, ShapeError)

__version__ = "0.1.0"

__all__ = [
    "CalintroError", "CheckpointError", "ConfigError", "NumericalError",
    "ParseError", "ShapeError", "__version__",
]
