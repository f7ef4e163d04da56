"""Periodic orbits of the planar four-body problem from structural boundary
conditions: action minimization, orbit extension, classification and linear
stability."""

__version__ = "0.1.0"

from .boundary import BoundaryParams, RotationAngle, build_qend, build_qstart  # noqa: E402
from .dynamics import MassModel, PhaseState, integrate  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .fixtures import FIXTURES, get_fixture  # noqa: E402

__all__ = ["BoundaryParams", "RotationAngle", "MassModel", "PhaseState", "build_qstart",
           "build_qend", "integrate", "FIXTURES", "get_fixture", "__version__"]
