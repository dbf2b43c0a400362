"""
Entrada/salida de imágenes PNG de 8 bits.

En memoria la fila 0 es la inferior (eje y de la cámara hacia arriba); en el archivo
la fila 0 es la superior, así que ambas direcciones invierten las filas.
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from src.errors import DataIOError, ImageFormatError
from src.volume.grid import Image

logger = logging.getLogger(__name__)

SAVE_MODES = {1: "L", 3: "RGB", 4: "RGBA"}
SUPPORTED_MODES = ("L", "LA", "RGB", "RGBA")


def save_image(image: Union[Image, np.ndarray], path) -> Path:
    """
    Guarda una imagen (C, n, n) con C ∈ {1, 3, 4}; los valores se acotan a [0,1] y cuantizan a 8 bits.
    """
    path = Path(path)
    values = image.values if isinstance(image, Image) else np.asarray(image)
    if values.ndim != 3 or values.shape[0] not in SAVE_MODES:
        raise ImageFormatError(f"No se puede guardar una imagen de forma {values.shape} como PNG")
    pixels = np.round(np.clip(values, 0.0, 1.0) * 255).astype(np.uint8)
    pixels = np.flip(np.moveaxis(pixels, 0, -1), axis=0)
    mode = SAVE_MODES[values.shape[0]]
    if mode == "L":
        pixels = pixels[..., 0]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        PILImage.fromarray(np.ascontiguousarray(pixels)).save(path, format="PNG")
    except OSError as e:
        error_msg = f"no se pudo escribir la imagen: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)
    return path


def _to_channels(pixels: np.ndarray, mode: str, channels: Optional[int]) -> np.ndarray:
    """
    Convierte (h, w, bandas) en [0,1] a los canales pedidos.

    RGBA/LA se componen sobre blanco para 3 canales; para 1 canal se conserva el alfa como máscara.
    """
    has_alpha = mode in ("LA", "RGBA")
    color = pixels[..., :-1] if has_alpha else pixels
    alpha = pixels[..., -1:] if has_alpha else None
    if channels == 1:
        if alpha is not None:
            return alpha
        if color.shape[-1] == 3:
            # Luminancia ITU-R 601-2, la misma que usa Pillow en convert("L")
            return color @ np.array([[0.299], [0.587], [0.114]])
        return color
    if alpha is not None:
        color = color * alpha + (1.0 - alpha)
    if channels == 3 and color.shape[-1] == 1:
        color = np.repeat(color, 3, axis=-1)
    if channels not in (None, color.shape[-1]):
        raise ImageFormatError(f"No se pueden obtener {channels} canales de una imagen {mode}")
    return color


def _area_resize(values: np.ndarray, resolution: int) -> np.ndarray:
    """Redimensiona (C, h, w) promediando áreas."""
    size = values.shape[1]
    if size == resolution:
        return values
    if size % resolution == 0:
        factor = size // resolution
        return values.reshape(values.shape[0], resolution, factor, resolution, factor).mean(axis=(2, 4))
    resized = [
        np.asarray(
            PILImage.fromarray(channel.astype(np.float32)).resize(
                (resolution, resolution), resample=PILImage.BOX
            ),
            dtype=np.float64,
        )
        for channel in values
    ]
    return np.stack(resized)


def load_image(path, resolution: Optional[int] = None, channels: Optional[int] = None) -> Image:
    """
    Carga un PNG de 8 bits (L, LA, RGB o RGBA) con valores en [0,1].

    Args:
        path: Ruta del archivo
        resolution: n_p de salida (promedio por áreas); None conserva el tamaño
        channels: 1 (alfa o luminancia) o 3 (color sobre blanco); None conserva los canales de color

    Returns:
        Image (C, n, n)
    """
    path = Path(path)
    try:
        with PILImage.open(path) as handle:
            handle.load()
            mode = handle.mode
            if mode not in SUPPORTED_MODES:
                raise ImageFormatError(f"{path}: modo/profundidad de bits no soportado '{mode}' (8 bits L, LA, RGB o RGBA)")
            pixels = np.asarray(handle, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        error_msg = f"imagen ilegible o corrupta: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)

    if pixels.ndim == 2:
        pixels = pixels[..., None]
    if pixels.shape[0] != pixels.shape[1]:
        raise ImageFormatError(f"{path}: se esperaba una imagen cuadrada, recibió {pixels.shape[1]}x{pixels.shape[0]}")
    values = np.moveaxis(_to_channels(pixels, mode, channels), -1, 0)
    values = np.flip(values, axis=1)
    if resolution is not None:
        values = _area_resize(values, resolution)
    return Image(np.ascontiguousarray(values, dtype=np.float32))
