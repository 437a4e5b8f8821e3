"""Traffic-sign visibility, recognizability and timely-recognizability
evaluation on annotated road point clouds."""

from .errors import (
    FallbackRequired,
    GeometryError,
    SignSightError,
    ValidationError,
)
from .io import load_scene, read_point_cloud, write_point_cloud
from .pipeline import evaluate, evaluate_sign
from .scene import ModelParams, PointCloud, SignInstance, SignLibrary, Trajectory

__all__ = [
    "FallbackRequired",
    "GeometryError",
    "ModelParams",
    "PointCloud",
    "SignInstance",
    "SignLibrary",
    "SignSightError",
    "Trajectory",
    "ValidationError",
    "evaluate",
    "evaluate_sign",
    "load_scene",
    "read_point_cloud",
    "write_point_cloud",
]

__version__ = "0.1.0"
