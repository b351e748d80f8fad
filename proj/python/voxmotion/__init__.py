"""Semantic voxel interaction representation: heatmap motion encoding,
diffusion-based generation, procedural interaction tasks, and metrics."""

from voxmotion._core import *  # noqa: F401,F403
from voxmotion import _core as core  # noqa: F401

__all__ = [name for name in dir(core) if not name.startswith("_")]
