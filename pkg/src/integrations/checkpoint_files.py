"""
Checkpoints de parámetros en formato PNET.

Cabecera `PNET`, u32 versión, u32 número de entradas; por entrada u32 longitud del
nombre, nombre UTF-8, u32 número de dims y las dims (u32). Después, las cargas útiles
float32 little-endian en el orden del manifiesto.
"""
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO

import numpy as np

from src.errors import CheckpointFormatError, DataIOError
from src.networks.layers import NetworkParams

logger = logging.getLogger(__name__)

MAGIC = b"PNET"
VERSION = 1
U32 = struct.Struct("<I")
PAYLOAD_DTYPE = np.dtype("<f4")


def save_checkpoint(params: NetworkParams, path) -> Path:
    """Guarda todos los parámetros con su manifiesto de nombres y dims."""
    path = Path(path)
    chunks = [MAGIC, U32.pack(VERSION), U32.pack(len(params))]
    for name, array in params.named().items():
        encoded = name.encode("utf-8")
        chunks += [U32.pack(len(encoded)), encoded, U32.pack(array.ndim)]
        chunks += [U32.pack(extent) for extent in array.shape]
    chunks += [np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes() for array in params.named().values()]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(chunks))
    except OSError as e:
        error_msg = f"no se pudo escribir el checkpoint: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)
    logger.info(f"💾 Checkpoint guardado: {path} ({params.count():,} parámetros)")
    return path


def _read(file: BinaryIO, size: int, path: Path) -> bytes:
    data = file.read(size)
    if len(data) < size:
        raise DataIOError(path, f"checkpoint truncado (se esperaban {size} bytes, hay {len(data)})")
    return data


def _read_u32(file: BinaryIO, path: Path) -> int:
    return U32.unpack(_read(file, U32.size, path))[0]


def load_checkpoint(path) -> NetworkParams:
    """
    Carga un PNET.

    Raises:
        CheckpointFormatError: Magic, versión o nombres inválidos
        DataIOError: Archivo ilegible o truncado
    """
    path = Path(path)
    try:
        with open(path, "rb") as file:
            magic = _read(file, len(MAGIC), path)
            if magic != MAGIC:
                raise CheckpointFormatError(f"{path}: magic inválido {magic!r}, se esperaba {MAGIC!r}")
            version = _read_u32(file, path)
            if version != VERSION:
                raise CheckpointFormatError(f"{path}: versión PNET no soportada {version}")
            manifest = []
            for _ in range(_read_u32(file, path)):
                raw_name = _read(file, _read_u32(file, path), path)
                try:
                    name = raw_name.decode("utf-8")
                except UnicodeDecodeError:
                    raise CheckpointFormatError(f"{path}: nombre de parámetro no UTF-8")
                dims = tuple(_read_u32(file, path) for _ in range(_read_u32(file, path)))
                if any(name == seen for seen, _ in manifest):
                    raise CheckpointFormatError(f"{path}: parámetro repetido '{name}'")
                manifest.append((name, dims))
            arrays = OrderedDict()
            for name, dims in manifest:
                count = int(np.prod(dims, dtype=np.int64))
                payload = _read(file, count * PAYLOAD_DTYPE.itemsize, path)
                arrays[name] = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float32).reshape(dims)
    except OSError as e:
        error_msg = f"no se pudo leer el checkpoint: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)
    return NetworkParams(arrays)
