"""
Capas de renderizado diferenciables.
"""
from src.render.formation import ImageFormation
from src.render.projections import (
    clamp_for_discriminator,
    project,
    project_ao,
    project_ea,
    project_vh,
    render,
    render_batch,
)

__all__ = [
    "ImageFormation",
    "clamp_for_discriminator",
    "project",
    "project_ao",
    "project_ea",
    "project_vh",
    "render",
    "render_batch",
]
