"""Residual channel attention networks for single-image super-resolution in numpy."""

from ._accel import BACKEND
from .network import RcanConfig, build, forward, backward, param_count, self_ensemble_forward

__all__ = [
    "BACKEND",
    "RcanConfig",
    "build",
    "forward",
    "backward",
    "param_count",
    "self_ensemble_forward",
]
__version__ = "0.1.0"
