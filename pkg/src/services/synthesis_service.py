"""
Servicio de síntesis: recetas de formas, voxelización analítica y datasets sintéticos.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from src.errors import ShapeRecipeError
from src.integrations.dataset_files import DatasetSample, ImageCollection, write_manifest
from src.integrations.image_files import save_image
from src.integrations.volume_files import save_volume
from src.render.formation import ImageFormation
from src.render.projections import render
from src.volume.grid import VoxelGrid
from src.volume.resample import voxel_centers
from src.volume.views import ViewDirection, angles_from_view, sample_views

logger = logging.getLogger(__name__)

DEFAULT_VIEWS_PER_SHAPE = 50
# Radio de la esfera inscrita en [−1,1]³: una forma dentro de ella no se recorta al rotar
INSCRIBED_RADIUS = 1.0


class PrimitiveKind(Enum):
    """Primitivas analíticas (el toro gira alrededor del eje y)."""
    SPHERE = "sphere"
    BOX = "box"
    TORUS = "torus"


@dataclass(frozen=True)
class Primitive:
    """Primitiva en coordenadas normalizadas [−1,1]³."""
    kind: PrimitiveKind
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.5
    half_extents: Tuple[float, float, float] = (0.3, 0.3, 0.3)
    tube_radius: float = 0.1
    density: float = 1.0
    color: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def bounding_radius(self) -> float:
        offset = math.sqrt(sum(c * c for c in self.center))
        if self.kind is PrimitiveKind.SPHERE:
            return offset + self.radius
        if self.kind is PrimitiveKind.BOX:
            return offset + math.sqrt(sum(h * h for h in self.half_extents))
        return offset + self.radius + self.tube_radius

    def inside(self, points: np.ndarray) -> np.ndarray:
        """Prueba de pertenencia estricta para puntos (N, 3) en orden (x, y, z)."""
        local = points - np.asarray(self.center)
        if self.kind is PrimitiveKind.SPHERE:
            return np.sum(local * local, axis=1) < self.radius ** 2
        if self.kind is PrimitiveKind.BOX:
            return np.all(np.abs(local) < np.asarray(self.half_extents), axis=1)
        ring = np.sqrt(local[:, 0] ** 2 + local[:, 2] ** 2) - self.radius
        return ring ** 2 + local[:, 1] ** 2 < self.tube_radius ** 2


@dataclass(frozen=True)
class ShapeRecipe:
    """Unión de primitivas; la validación de límites ocurre al construirla."""
    recipe_id: str
    primitives: Tuple[Primitive, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.primitives:
            raise ShapeRecipeError(f"Receta '{self.recipe_id}' sin primitivas")
        for primitive in self.primitives:
            values = (primitive.radius, primitive.tube_radius) + tuple(primitive.half_extents)
            if min(values) < 0:
                raise ShapeRecipeError(f"Receta '{self.recipe_id}': tamaños negativos en {primitive.kind.value}")
            if not 0.0 <= primitive.density <= 1.0 or not all(0.0 <= c <= 1.0 for c in primitive.color):
                raise ShapeRecipeError(f"Receta '{self.recipe_id}': densidad o color fuera de [0,1]")
            if primitive.bounding_radius() > INSCRIBED_RADIUS:
                raise ShapeRecipeError(
                    f"Receta '{self.recipe_id}': {primitive.kind.value} sale de la esfera inscrita "
                    f"(radio envolvente {primitive.bounding_radius():.3f})"
                )


@dataclass
class SyntheticSample:
    """Imagen renderizada con la vista usada y la receta de origen."""
    image: np.ndarray
    view: ViewDirection
    recipe_id: str


@dataclass
class SyntheticDataset:
    """Resultado de `synth_dataset`: imágenes y volúmenes de verdad (marco del mundo) por receta."""
    samples: List[SyntheticSample]
    truths: dict
    formation: ImageFormation

    def collection(self) -> ImageCollection:
        return ImageCollection(np.stack([sample.image for sample in self.samples]))


class SynthesisService:
    """
    Servicio de generación de datasets sintéticos con verdad 3D completa.
    """

    def voxelize(self, recipe: ShapeRecipe, resolution: int, channels: int = 1) -> VoxelGrid:
        """
        Voxeliza una receta probando el centro de cada vóxel.

        Args:
            recipe: Receta de la forma
            resolution: n_p
            channels: 1 (densidad) o 4 (emisión RGB + absorción)

        Returns:
            VoxelGrid en el marco del mundo
        """
        points = voxel_centers(resolution)
        density = np.zeros(len(points))
        color = np.zeros((len(points), 3))
        for primitive in recipe.primitives:
            covered = primitive.inside(points) & (primitive.density > density)
            density[covered] = primitive.density
            color[covered] = primitive.color
        shape = (resolution, resolution, resolution)
        if channels == 1:
            values = density.reshape((1,) + shape)
        else:
            values = np.concatenate([color.T.reshape((3,) + shape), density.reshape((1,) + shape)])
        return VoxelGrid(values.astype(np.float32))

    def sphere_family(self, count: int, rng: np.random.Generator, colored: bool = False) -> List[ShapeRecipe]:
        """Esferas de radio, posición y densidad aleatorios."""
        recipes = []
        for index in range(count):
            radius = float(rng.uniform(0.25, 0.6))
            center = self._random_center(rng, 0.9 - radius)
            recipes.append(ShapeRecipe(
                f"sphere-{index:04d}",
                (Primitive(
                    PrimitiveKind.SPHERE,
                    center=center,
                    radius=radius,
                    density=float(rng.uniform(0.6, 1.0)),
                    color=self._random_color(rng) if colored else (1.0, 1.0, 1.0),
                ),),
            ))
        return recipes

    def mixed_family(self, count: int, rng: np.random.Generator, colored: bool = False) -> List[ShapeRecipe]:
        """Esferas, cajas, toros y uniones de dos primitivas."""
        recipes = []
        for index in range(count):
            parts = 2 if rng.uniform() < 0.25 else 1
            primitives = tuple(self._random_primitive(rng, colored, scale=0.6 if parts == 2 else 1.0) for _ in range(parts))
            recipes.append(ShapeRecipe(f"mixed-{index:04d}", primitives))
        return recipes

    def _random_primitive(self, rng: np.random.Generator, colored: bool, scale: float) -> Primitive:
        kind = list(PrimitiveKind)[int(rng.integers(len(PrimitiveKind)))]
        density = float(rng.uniform(0.6, 1.0))
        color = self._random_color(rng) if colored else (1.0, 1.0, 1.0)
        if kind is PrimitiveKind.SPHERE:
            radius = float(rng.uniform(0.2, 0.5)) * scale
            return Primitive(kind, self._random_center(rng, 0.9 - radius), radius=radius, density=density, color=color)
        if kind is PrimitiveKind.BOX:
            half = tuple(float(h) for h in rng.uniform(0.12, 0.35, size=3) * scale)
            reach = math.sqrt(sum(h * h for h in half))
            return Primitive(kind, self._random_center(rng, 0.9 - reach), half_extents=half, density=density, color=color)
        radius = float(rng.uniform(0.25, 0.45)) * scale
        tube = float(rng.uniform(0.08, 0.15)) * scale
        return Primitive(
            kind, self._random_center(rng, 0.9 - radius - tube), radius=radius, tube_radius=tube,
            density=density, color=color,
        )

    @staticmethod
    def _random_center(rng: np.random.Generator, reach: float) -> Tuple[float, float, float]:
        direction = sample_views(rng, 1)[0]
        distance = max(reach, 0.0) * 0.5 * float(rng.uniform())
        return tuple(float(c) for c in direction * distance)

    @staticmethod
    def _random_color(rng: np.random.Generator) -> Tuple[float, float, float]:
        return tuple(float(c) for c in rng.uniform(0.2, 1.0, size=3))

    def synth_dataset(
        self,
        recipes: Sequence[ShapeRecipe],
        formation: ImageFormation,
        rng: np.random.Generator,
        resolution: int,
        views_per_shape: int = DEFAULT_VIEWS_PER_SHAPE,
    ) -> SyntheticDataset:
        """
        Renderiza cada receta desde vistas uniformes.

        Args:
            recipes: Recetas (no vacía)
            formation: Formación de imagen
            rng: Fuente aleatoria sembrada (vistas)
            resolution: n_p
            views_per_shape: Vistas por forma

        Returns:
            SyntheticDataset con imágenes, vistas y volúmenes de verdad
        """
        if not recipes:
            raise ShapeRecipeError("synth_dataset requiere al menos una receta")
        samples, truths = [], {}
        for recipe in recipes:
            truth = self.voxelize(recipe, resolution, formation.volume_channels)
            truths[recipe.recipe_id] = truth
            for vector in sample_views(rng, views_per_shape):
                view = ViewDirection(*(float(c) for c in vector))
                samples.append(SyntheticSample(render(view, truth, formation).values, view, recipe.recipe_id))
        logger.info(
            f"✅ Dataset sintético: {len(recipes)} formas × {views_per_shape} vistas ({formation.value}, n_p={resolution})"
        )
        return SyntheticDataset(samples, truths, formation)

    def write_dataset(self, dataset: SyntheticDataset, directory) -> Path:
        """
        Escribe PNGs, un PVOX por receta y el manifiesto.

        Las vistas se guardan como azimut/elevación; al releer se reconstruye ω con `view_from_angles`.
        """
        root = Path(directory)
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "volumes").mkdir(parents=True, exist_ok=True)
        for recipe_id, truth in dataset.truths.items():
            save_volume(truth, root / "volumes" / f"{recipe_id}.pvox")

        rows = []
        for index, sample in enumerate(dataset.samples):
            image_name = f"images/{index:06d}.png"
            save_image(sample.image, root / image_name)
            azimuth, elevation = angles_from_view(sample.view)
            rows.append(DatasetSample(image_name, f"volumes/{sample.recipe_id}.pvox", azimuth, elevation, sample.recipe_id))
        manifest = write_manifest(root, rows)
        logger.info(f"💾 Dataset escrito en {root} ({len(rows)} muestras)")
        return manifest


# Instancia global del servicio
synthesis_service = SynthesisService()
