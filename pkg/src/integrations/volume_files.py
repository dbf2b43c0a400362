"""
Lectura y escritura de volúmenes en formato PVOX.

Cabecera: magic `PVOX`, u32 versión (=1), u32 n_c, u32 n_p (little-endian), seguida de
n_c·n_p³ floats de 32 bits little-endian en orden canal, z, y, x.
"""
import logging
import struct
from pathlib import Path

import numpy as np

from src.errors import DataIOError, VolumeFormatError
from src.volume.grid import VoxelGrid

logger = logging.getLogger(__name__)

MAGIC = b"PVOX"
VERSION = 1
HEADER = struct.Struct("<4sIII")
PAYLOAD_DTYPE = np.dtype("<f4")


def save_volume(grid: VoxelGrid, path) -> Path:
    """
    Guarda un VoxelGrid como PVOX.

    Args:
        grid: Volumen a guardar
        path: Ruta destino

    Returns:
        Ruta escrita
    """
    path = Path(path)
    header = HEADER.pack(MAGIC, VERSION, grid.channels, grid.resolution)
    payload = np.ascontiguousarray(grid.values, dtype=PAYLOAD_DTYPE).tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + payload)
    except OSError as e:
        error_msg = f"no se pudo escribir el volumen: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)
    logger.debug(f"💾 Volumen guardado en {path} (n_c={grid.channels}, n_p={grid.resolution})")
    return path


def load_volume(path) -> VoxelGrid:
    """
    Carga un PVOX.

    Raises:
        VolumeFormatError: Magic o versión inválidos (se valida antes de leer la carga útil)
        DataIOError: Archivo ilegible o carga útil truncada
    """
    path = Path(path)
    try:
        with open(path, "rb") as file:
            header = file.read(HEADER.size)
            if len(header) < HEADER.size:
                raise DataIOError(path, f"cabecera truncada ({len(header)} de {HEADER.size} bytes)")
            magic, version, channels, resolution = HEADER.unpack(header)
            if magic != MAGIC:
                raise VolumeFormatError(f"{path}: magic inválido {magic!r}, se esperaba {MAGIC!r}")
            if version != VERSION:
                raise VolumeFormatError(f"{path}: versión PVOX no soportada {version}")
            expected = channels * resolution ** 3 * PAYLOAD_DTYPE.itemsize
            payload = file.read(expected)
    except OSError as e:
        error_msg = f"no se pudo leer el volumen: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)

    if len(payload) < expected:
        raise DataIOError(path, f"carga útil truncada ({len(payload)} de {expected} bytes)")
    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float32)
    return VoxelGrid(values.reshape(channels, resolution, resolution, resolution))
