"""
Rotación y remuestreo trilineal diferenciable de volúmenes: T(ω).

Cada vóxel de salida (centro en [−1,1]³, coordenadas de cámara) se lleva al mundo con
la rotación inversa y se interpola trilinealmente del volumen de entrada; las
muestras fuera del cubo leen 0. El operador es lineal, así que se materializa como
una matriz dispersa S (n³ × n³): salida = S·v y adjunto = Sᵀ·g.
"""
import itertools
import logging
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy import sparse

from src.diffcore.tape import Node
from src.volume.grid import VoxelGrid
from src.volume.views import ViewDirection, rotation_from_view

logger = logging.getLogger(__name__)

# Coordenadas de muestreo a esta distancia de un entero se redondean (rotaciones de 90° exactas)
SNAP_TOLERANCE = 1e-9


def voxel_centers(resolution: int) -> np.ndarray:
    """Centros (x, y, z) de todos los vóxeles en [−1,1]³, en el orden plano (z, y, x)."""
    axis = (np.arange(resolution) + 0.5) / resolution * 2 - 1
    z, y, x = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


# Solo se guardan las rotaciones alineadas con los ejes (vista frontal, vistas fijas de la CLI)
CACHED_MATRICES = 8


def _is_axis_aligned(rotation: np.ndarray) -> bool:
    magnitudes = np.abs(rotation)
    return bool(np.all((magnitudes < SNAP_TOLERANCE) | (np.abs(magnitudes - 1) < SNAP_TOLERANCE)))


@lru_cache(maxsize=CACHED_MATRICES)
def _cached_matrix(rotation_key: Tuple[float, ...], resolution: int) -> sparse.csr_matrix:
    return _build_matrix(np.array(rotation_key).reshape(3, 3), resolution)


def _build_matrix(rotation: np.ndarray, resolution: int) -> sparse.csr_matrix:
    # Fila i de centros: c_i (cámara); p_i = Rᵀ c_i (mundo)
    world = voxel_centers(resolution) @ rotation
    source = (world + 1) * resolution / 2 - 0.5
    nearest = np.round(source)
    source = np.where(np.abs(source - nearest) < SNAP_TOLERANCE, nearest, source)

    base = np.floor(source).astype(np.int64)
    frac = source - base
    count = resolution ** 3
    rows, cols, weights = [], [], []
    for corner in itertools.product((0, 1), repeat=3):
        offset = np.array(corner)
        index = base + offset
        weight = np.prod(np.where(offset == 1, frac, 1 - frac), axis=1)
        inside = np.all((index >= 0) & (index < resolution), axis=1) & (weight > 0)
        x, y, z = index[inside].T
        rows.append(np.nonzero(inside)[0])
        cols.append((z * resolution + y) * resolution + x)
        weights.append(weight[inside])
    matrix = sparse.coo_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(count, count),
    )
    return matrix.tocsr()


def sampling_matrix(rotation: np.ndarray, resolution: int) -> sparse.csr_matrix:
    """
    Matriz dispersa de remuestreo para una rotación mundo -> cámara arbitraria.

    Args:
        rotation: Matriz 3×3 ortonormal
        resolution: n_p

    Returns:
        CSR (n³ × n³) con pesos trilineales
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    if _is_axis_aligned(rotation):
        return _cached_matrix(tuple(np.round(rotation).ravel().tolist()), resolution)
    return _build_matrix(rotation, resolution)


def apply_sampling(values: np.ndarray, matrix: sparse.csr_matrix) -> np.ndarray:
    """Aplica S a todos los canales (y lotes) de un array (..., n, n, n)."""
    shape = values.shape
    flat = values.reshape(-1, matrix.shape[1])
    out = (matrix @ flat.T).T
    return np.ascontiguousarray(out.reshape(shape), dtype=values.dtype)


def apply_sampling_adjoint(grad: np.ndarray, matrix: sparse.csr_matrix) -> np.ndarray:
    """Aplica Sᵀ: dispersa cada adjunto con los mismos pesos trilineales."""
    shape = grad.shape
    flat = grad.reshape(-1, matrix.shape[0])
    out = (matrix.T @ flat.T).T
    return np.ascontiguousarray(out.reshape(shape), dtype=grad.dtype)


def resample(volume: Node, rotation: np.ndarray) -> Node:
    """Primitiva de cinta: remuestrea un nodo (..., n, n, n) con una rotación arbitraria."""
    matrix = sampling_matrix(rotation, volume.shape[-1])
    return volume.tape.record(
        "rotate_resample",
        apply_sampling(volume.value, matrix),
        (volume,),
        lambda g: (apply_sampling_adjoint(g, matrix),),
    )


def rotate_resample(volume: Union[VoxelGrid, Node], view: ViewDirection) -> Union[VoxelGrid, Node]:
    """
    Lleva un volumen del marco del mundo al marco de cámara de la vista ω.

    Args:
        volume: VoxelGrid, o nodo (n_c, n, n, n) / (B, n_c, n, n, n)
        view: Dirección de vista

    Returns:
        Mismo tipo y dimensiones que la entrada; la vista ω₀ devuelve la entrada sin cambios
    """
    rotation = rotation_from_view(view)
    if np.array_equal(rotation, np.eye(3)):
        return volume
    if isinstance(volume, VoxelGrid):
        matrix = sampling_matrix(rotation, volume.resolution)
        return VoxelGrid(apply_sampling(volume.values, matrix))
    return resample(volume, rotation)
