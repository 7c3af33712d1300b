"""Simulator for a robot-held projector that keeps rendered mask content
registered on a moving face: kinematics, optics, landmark tracking, servo
control, and the projector-frame renderer.
"""

from . import arm, config, face, geometry, mapping, optics, runner, servo
from .errors import FaceProjError
from .kernels import active_backend

__version__ = "1.0.0"

__all__ = [
    "arm",
    "config",
    "face",
    "geometry",
    "mapping",
    "optics",
    "runner",
    "servo",
    "FaceProjError",
    "active_backend",
    "__version__",
]
