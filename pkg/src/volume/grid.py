"""
Tipos de datos de volúmenes e imágenes.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.errors import RangeViolationError, ShapeMismatchError

logger = logging.getLogger(__name__)

# Tolerancia para el redondeo de punto flotante al validar [0,1]
RANGE_TOLERANCE = 1e-6

# Canal de densidad según el número de canales: absorción v_a en volúmenes RGBA
DENSITY_CHANNEL = {1: 0, 4: 3}


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """
    Campo cúbico de n_c canales, disposición (canal, z, y, x).

    n_c = 1: densidad (VH/AO). n_c = 4: emisión RGB en los canales 0-2 y absorción en el 3 (EA).
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 4 or not (values.shape[1] == values.shape[2] == values.shape[3]):
            raise ShapeMismatchError(f"VoxelGrid requiere forma (n_c, n, n, n), recibió {values.shape}")
        if values.shape[0] not in DENSITY_CHANNEL:
            raise ShapeMismatchError(f"VoxelGrid admite 1 o 4 canales, recibió {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise RangeViolationError("VoxelGrid contiene valores no finitos")
        if values.size and (values.min() < -RANGE_TOLERANCE or values.max() > 1 + RANGE_TOLERANCE):
            raise RangeViolationError(
                f"VoxelGrid fuera de [0,1]: min={values.min():.6g}, max={values.max():.6g}"
            )
        if values.size and (values.min() < 0 or values.max() > 1):
            values = np.clip(values, 0, 1)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, channels: int, resolution: int, dtype=np.float32) -> "VoxelGrid":
        return cls(np.zeros((channels, resolution, resolution, resolution), dtype=dtype))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def resolution(self) -> int:
        return self.values.shape[1]

    def density(self) -> np.ndarray:
        """Canal escalar de densidad (n, n, n): el único en n_c=1, la absorción en n_c=4."""
        return self.values[DENSITY_CHANNEL[self.channels]]

    def __repr__(self) -> str:
        return f"VoxelGrid(n_c={self.channels}, n_p={self.resolution}, dtype={self.values.dtype})"


@dataclass(frozen=True, eq=False)
class Image:
    """Imagen cuadrada de C canales, disposición (canal, fila, columna); la fila 0 es la inferior."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ShapeMismatchError(f"Image requiere forma (C, n, n), recibió {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def resolution(self) -> int:
        return self.values.shape[1]

    def __repr__(self) -> str:
        return f"Image(C={self.channels}, n={self.resolution})"
