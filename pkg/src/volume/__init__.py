"""
Volúmenes de vóxeles, vistas y remuestreo por rotación.
"""
from src.volume.grid import Image, VoxelGrid
from src.volume.resample import rotate_resample, sampling_matrix
from src.volume.views import (
    CANONICAL_VIEW,
    ViewDirection,
    angles_from_view,
    rotation_from_view,
    sample_view,
    sample_views,
    view_from_angles,
)

__all__ = [
    "CANONICAL_VIEW",
    "Image",
    "ViewDirection",
    "VoxelGrid",
    "angles_from_view",
    "rotate_resample",
    "rotation_from_view",
    "sample_view",
    "sample_views",
    "sampling_matrix",
    "view_from_angles",
]
