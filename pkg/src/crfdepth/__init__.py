"""Depth completion from one RGB image and a sparse LiDAR scan.

Superpixels from SLIC become nodes of a Gaussian CRF whose unary term ties
each node to its LiDAR depth and whose colour, surface-normal and depth
pairwise terms smooth neighbouring nodes. The MAP estimate solves a sparse
symmetric system by Conjugate Gradient Squared.
"""

from ._backend import BACKEND
from .config import RunConfig, load_config, write_config
from .errors import CrfDepthError, FormatError, SingularSystemError, SolverError, ValidationError
from .pipeline import Frame, FrameBundle, run_complete

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CrfDepthError",
    "FormatError",
    "Frame",
    "FrameBundle",
    "RunConfig",
    "SingularSystemError",
    "SolverError",
    "ValidationError",
    "load_config",
    "run_complete",
    "write_config",
]
