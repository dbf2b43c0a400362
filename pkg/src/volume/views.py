"""
Direcciones de vista, muestreo uniforme en la esfera y marco de cámara.

Convención: la cámara está en ω sobre la esfera unidad, mira al origen con
proyección ortográfica y orientación vertical fija (arriba = +y, o +x en los polos).
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6
POLE_TOLERANCE = 1e-6
WORLD_UP = np.array([0.0, 1.0, 0.0])
FALLBACK_UP = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class ViewDirection:
    """Vector unitario ω (x, y, z)."""
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ShapeMismatchError(f"ViewDirection debe ser unitario (norma {norm:.8f})")

    @classmethod
    def from_vector(cls, vector) -> "ViewDirection":
        vector = np.asarray(vector, dtype=np.float64)
        return cls(*(float(c) for c in vector / np.linalg.norm(vector)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


# ω₀: la vista cuya rotación es la identidad
CANONICAL_VIEW = ViewDirection(0.0, 0.0, -1.0)


def view_from_angles(azimuth_deg: float, elevation_deg: float) -> ViewDirection:
    """ω = (cos el·sin az, sin el, −cos el·cos az); (0, 0) corresponde a ω₀."""
    if azimuth_deg == 0 and elevation_deg == 0:
        return CANONICAL_VIEW
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    return ViewDirection.from_vector([math.cos(el) * math.sin(az), math.sin(el), -math.cos(el) * math.cos(az)])


def angles_from_view(view: ViewDirection) -> Tuple[float, float]:
    """Inversa de `view_from_angles`: (azimut, elevación) en grados."""
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, view.y))))
    azimuth = math.degrees(math.atan2(view.x, -view.z))
    return azimuth, elevation


def sample_views(rng: np.random.Generator, count: int) -> np.ndarray:
    """Muestra `count` direcciones uniformes en S² (normalizando gaussianas 3D)."""
    vectors = rng.standard_normal((count, 3))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    # Una norma nula tiene probabilidad cero; se sustituye por ω₀ para mantener el contrato
    degenerate = norms[:, 0] == 0
    vectors[degenerate] = CANONICAL_VIEW.as_array()
    norms[degenerate] = 1.0
    return vectors / norms


def sample_view(rng: np.random.Generator) -> ViewDirection:
    return ViewDirection(*(float(c) for c in sample_views(rng, 1)[0]))


def rotation_from_view(view: ViewDirection) -> np.ndarray:
    """
    Matriz 3×3 mundo -> cámara.

    Las filas son (derecha, arriba, adelante) con adelante = −ω: el eje de
    profundidad de la cámara apunta desde la cámara hacia el origen.
    """
    forward = -view.as_array()
    up = FALLBACK_UP if abs(view.y) > 1 - POLE_TOLERANCE else WORLD_UP
    right = np.cross(up, forward)
    right /= np.linalg.norm(right)
    camera_up = np.cross(forward, right)
    camera_up /= np.linalg.norm(camera_up)
    return np.stack([right, camera_up, forward])
