"""
Directorios de dataset: manifiesto CSV + imágenes PNG + volúmenes PVOX.

Cada línea del manifiesto (sin cabecera) describe una muestra:
ruta de imagen, ruta de volumen, azimut, elevación, id de receta. Las rutas son
relativas al directorio del dataset.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import DataIOError, ShapeMismatchError
from src.integrations.image_files import load_image
from src.integrations.volume_files import load_volume
from src.volume.grid import VoxelGrid
from src.volume.views import ViewDirection, view_from_angles

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"


@dataclass(frozen=True)
class DatasetSample:
    """Procedencia de una imagen del dataset."""
    image_path: str
    grid_path: str
    azimuth: float
    elevation: float
    recipe_id: str

    @property
    def view(self) -> ViewDirection:
        return view_from_angles(self.azimuth, self.elevation)


@dataclass
class ImageCollection:
    """Imágenes (N, C, n, n) de dimensiones uniformes con su procedencia."""
    images: np.ndarray
    samples: List[DatasetSample] = field(default_factory=list)
    root: Optional[Path] = None

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[2] != self.images.shape[3]:
            raise ShapeMismatchError(f"ImageCollection requiere (N, C, n, n), recibió {self.images.shape}")
        if self.samples and len(self.samples) != self.images.shape[0]:
            raise ShapeMismatchError(f"{len(self.samples)} procedencias para {self.images.shape[0]} imágenes")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def channels(self) -> int:
        return self.images.shape[1]

    @property
    def resolution(self) -> int:
        return self.images.shape[2]

    def subset(self, indices: Sequence[int]) -> "ImageCollection":
        indices = list(indices)
        return ImageCollection(
            self.images[indices],
            [self.samples[i] for i in indices] if self.samples else [],
            self.root,
        )

    def load_truth(self, sample: DatasetSample, cache: Optional[Dict[str, VoxelGrid]] = None) -> VoxelGrid:
        """Volumen de verdad (marco del mundo) de una muestra, opcionalmente cacheado por ruta."""
        if cache is not None and sample.grid_path in cache:
            return cache[sample.grid_path]
        grid = load_volume(self._resolve(sample.grid_path))
        if cache is not None:
            cache[sample.grid_path] = grid
        return grid

    def _resolve(self, relative: str) -> Path:
        return (self.root / relative) if self.root is not None else Path(relative)


def write_manifest(directory, samples: Sequence[DatasetSample]) -> Path:
    path = Path(directory) / MANIFEST_NAME
    try:
        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            for sample in samples:
                writer.writerow([
                    sample.image_path, sample.grid_path, repr(sample.azimuth), repr(sample.elevation), sample.recipe_id
                ])
    except OSError as e:
        error_msg = f"no se pudo escribir el manifiesto: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)
    return path


def read_manifest(directory) -> List[DatasetSample]:
    path = Path(directory) / MANIFEST_NAME
    samples = []
    try:
        with open(path, "r", newline="", encoding="utf-8") as file:
            for number, row in enumerate(csv.reader(file), start=1):
                if not row:
                    continue
                if len(row) != 5:
                    raise DataIOError(path, f"línea {number}: se esperaban 5 campos, hay {len(row)}")
                try:
                    samples.append(DatasetSample(row[0], row[1], float(row[2]), float(row[3]), row[4]))
                except ValueError:
                    raise DataIOError(path, f"línea {number}: azimut/elevación no numéricos")
    except OSError as e:
        error_msg = f"no se pudo leer el manifiesto: {e}"
        logger.error(f"❌ {path}: {error_msg}")
        raise DataIOError(path, error_msg)
    return samples


def load_collection(directory, resolution: int, channels: int) -> ImageCollection:
    """
    Carga todas las imágenes de un directorio de dataset.

    Args:
        directory: Directorio con manifest.csv
        resolution: n_p de entrenamiento (promedio por áreas si difiere)
        channels: Canales que exige la formación de imagen

    Returns:
        ImageCollection con la procedencia de cada imagen
    """
    root = Path(directory)
    samples = read_manifest(root)
    logger.info(f"🔍 Cargando {len(samples)} imágenes de {root}")
    images = [load_image(root / sample.image_path, resolution=resolution, channels=channels).values for sample in samples]
    stacked = np.stack(images) if images else np.zeros((0, channels, resolution, resolution), dtype=np.float32)
    return ImageCollection(stacked, samples, root)
