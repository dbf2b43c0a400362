"""
Servicio de evaluación: métricas 2D (SSIM/DSSIM sobre vistas re-renderizadas) y 3D (RMSE, IoU, chamfer ponderado).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage, spatial

from src.errors import ShapeMismatchError
from src.render.formation import ImageFormation
from src.render.projections import render
from src.volume.grid import Image, VoxelGrid
from src.volume.views import ViewDirection, angles_from_view, sample_views

logger = logging.getLogger(__name__)

EVALUATION_VIEWS = 10
SSIM_SIGMA = 1.5
# radio = int(3.5·1.5 + 0.5) = 5: ventana gaussiana de 11×11
SSIM_TRUNCATE = 3.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_THRESHOLD = 0.5
DEFAULT_EPSILON = 1e-3
# Pares punto-candidato a partir de los cuales chamfer usa el árbol k-d
BRUTE_FORCE_PAIRS = 20_000_000

ImageLike = Union[Image, np.ndarray]
GridLike = Union[VoxelGrid, np.ndarray]


def _image_values(image: ImageLike) -> np.ndarray:
    values = image.values if isinstance(image, Image) else np.asarray(image)
    values = np.asarray(values, dtype=np.float64)
    return values[None] if values.ndim == 2 else values


def _grid_values(grid: GridLike) -> np.ndarray:
    return np.asarray(grid.values if isinstance(grid, VoxelGrid) else grid, dtype=np.float64)


def _density(grid: GridLike) -> np.ndarray:
    """Densidad escalar (n, n, n); un array 3D se toma tal cual."""
    if isinstance(grid, VoxelGrid):
        return np.asarray(grid.density(), dtype=np.float64)
    values = np.asarray(grid, dtype=np.float64)
    return values if values.ndim == 3 else VoxelGrid(values).density().astype(np.float64)


def _same_shape(a: np.ndarray, b: np.ndarray, label: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{label}: dimensiones distintas {a.shape} vs {b.shape}")


def ssim(a: ImageLike, b: ImageLike, data_range: float = 1.0) -> float:
    """
    SSIM medio con ventana gaussiana 11×11 (σ=1.5), K1=0.01, K2=0.03; promedio por canal.

    Los momentos locales usan covarianza poblacional y bordes reflejados.
    """
    x, y = _image_values(a), _image_values(b)
    _same_shape(x, y, "ssim")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def blur(values):
        return ndimage.gaussian_filter(values, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")

    scores = []
    for xc, yc in zip(x, y):
        mu_x, mu_y = blur(xc), blur(yc)
        var_x = blur(xc * xc) - mu_x * mu_x
        var_y = blur(yc * yc) - mu_y * mu_y
        cov = blur(xc * yc) - mu_x * mu_y
        numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(numerator / denominator)))
    return float(np.mean(scores))


def dssim(a: ImageLike, b: ImageLike) -> float:
    """Disimilitud estructural (1 − SSIM) / 2."""
    return (1.0 - ssim(a, b)) / 2.0


def rmse(a: GridLike, b: GridLike) -> float:
    x, y = _grid_values(a), _grid_values(b)
    _same_shape(x, y, "rmse")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def iou(a: GridLike, b: GridLike, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Intersección sobre unión de las densidades binarizadas (> threshold); 1 si ambas están vacías."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold debe estar en (0,1), recibió {threshold}")
    x, y = _density(a) > threshold, _density(b) > threshold
    _same_shape(x, y, "iou")
    union = np.count_nonzero(x | y)
    if union == 0:
        return 1.0
    return np.count_nonzero(x & y) / union


def chamfer_weighted(target: GridLike, other: GridLike, epsilon: float = DEFAULT_EPSILON) -> float:
    """
    Distancia chamfer direccional ponderada: (1/N) Σ_{p_i∈T} min_{p_j∈O} w_j ‖p_i − p_j‖².

    Los puntos son centros de vóxeles con densidad > epsilon, en unidades de vóxel; w_j es la
    densidad de O en p_j y N = n³. Devuelve inf si O está vacío y T no.
    """
    t_density, o_density = _density(target), _density(other)
    _same_shape(t_density, o_density, "chamfer_weighted")
    t_points = np.argwhere(t_density > epsilon).astype(np.float64)
    o_mask = o_density > epsilon
    o_points = np.argwhere(o_mask).astype(np.float64)
    weights = o_density[o_mask]
    total = t_density.size
    if len(t_points) == 0:
        return 0.0
    if len(o_points) == 0:
        return float("inf")

    if len(t_points) * len(o_points) <= BRUTE_FORCE_PAIRS:
        minima = _weighted_minima_dense(t_points, o_points, weights)
    else:
        minima = _weighted_minima_tree(t_points, o_points, weights)
    return float(np.sum(minima) / total)


def _weighted_minima_dense(t_points: np.ndarray, o_points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    chunk = max(1, 4_000_000 // len(o_points))
    minima = np.empty(len(t_points))
    for start in range(0, len(t_points), chunk):
        block = t_points[start:start + chunk]
        squared = np.sum((block[:, None, :] - o_points[None, :, :]) ** 2, axis=2)
        minima[start:start + chunk] = np.min(squared * weights[None, :], axis=1)
    return minima


def _weighted_minima_tree(t_points: np.ndarray, o_points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Mínimo ponderado exacto con poda: el vecino más cercano sin pesos da una cota b_i, y
    ningún candidato con w_j·d² < b_i puede estar a más de sqrt(b_i / w_min).
    """
    tree = spatial.cKDTree(o_points)
    distances, nearest = tree.query(t_points)
    bounds = weights[nearest] * distances ** 2
    radii = np.sqrt(bounds / weights.min())
    minima = bounds.copy()
    for i, (point, radius) in enumerate(zip(t_points, radii)):
        candidates = tree.query_ball_point(point, radius)
        if candidates:
            squared = np.sum((o_points[candidates] - point) ** 2, axis=1)
            minima[i] = min(minima[i], float(np.min(squared * weights[candidates])))
    return minima


@dataclass
class EvalReport:
    """Métricas de una reconstrucción frente a su verdad."""
    dssim: Dict[str, float]
    dssim_per_view: Dict[str, List[float]]
    rmse: float
    iou: float
    chamfer: float
    view_seed: int
    views: List[Tuple[float, float]] = field(default_factory=list)
    label: str = ""

    @property
    def chamfer_empty(self) -> bool:
        """True cuando O no tiene puntos y T sí (chamfer = inf)."""
        return bool(np.isinf(self.chamfer))


@dataclass
class EvalSummary:
    """Agregado de varios EvalReport: cada valor es la media de los valores por muestra."""
    reports: List[EvalReport]
    dssim: Dict[str, float]
    rmse: float
    iou: float
    chamfer: float
    chamfer_empty_count: int

    @property
    def count(self) -> int:
        return len(self.reports)


class EvaluationService:
    """
    Servicio de evaluación de reconstrucciones.
    """

    def evaluate(
        self,
        recon: VoxelGrid,
        truth: VoxelGrid,
        formations: Optional[Sequence[ImageFormation]] = None,
        view_seed: int = 0,
        threshold: float = DEFAULT_THRESHOLD,
        epsilon: float = DEFAULT_EPSILON,
        label: str = "",
    ) -> EvalReport:
        """
        Evalúa una reconstrucción desde 10 vistas aleatorias sembradas.

        Args:
            recon: Volumen reconstruido (T en chamfer)
            truth: Volumen de verdad (O en chamfer)
            formations: Formaciones para DSSIM (por defecto, todas las compatibles con los canales)
            view_seed: Semilla de las vistas
            threshold: Umbral de IoU
            epsilon: Corte de ocupación de chamfer

        Returns:
            EvalReport
        """
        if recon.values.shape != truth.values.shape:
            raise ShapeMismatchError(f"evaluate: {recon!r} vs {truth!r}")
        if formations is None:
            formations = ImageFormation.compatible_with(truth.channels)
        rng = np.random.default_rng(view_seed)
        views = [ViewDirection(*(float(c) for c in vector)) for vector in sample_views(rng, EVALUATION_VIEWS)]

        per_view: Dict[str, List[float]] = {}
        for formation in formations:
            scores = []
            for view in views:
                rendered_recon = np.clip(render(view, recon, formation).values, 0.0, 1.0)
                rendered_truth = np.clip(render(view, truth, formation).values, 0.0, 1.0)
                scores.append(dssim(rendered_recon, rendered_truth))
            per_view[formation.value] = scores

        report = EvalReport(
            dssim={name: float(np.mean(scores)) for name, scores in per_view.items()},
            dssim_per_view=per_view,
            rmse=rmse(recon, truth),
            iou=iou(recon, truth, threshold),
            chamfer=chamfer_weighted(recon, truth, epsilon),
            view_seed=view_seed,
            views=[angles_from_view(view) for view in views],
            label=label,
        )
        logger.debug(
            f"🔍 Evaluación {label}: IoU={report.iou:.4f}, RMSE={report.rmse:.4f}, CD={report.chamfer:.4f}"
        )
        return report

    def aggregate(self, reports: Sequence[EvalReport]) -> EvalSummary:
        """
        Promedia informes por muestra; los chamfer infinitos se cuentan aparte y no entran en la media.
        """
        if not reports:
            raise ValueError("aggregate requiere al menos un informe")
        formations = sorted({name for report in reports for name in report.dssim})
        finite_chamfer = [report.chamfer for report in reports if not report.chamfer_empty]
        return EvalSummary(
            reports=list(reports),
            dssim={
                name: float(np.mean([report.dssim[name] for report in reports if name in report.dssim]))
                for name in formations
            },
            rmse=float(np.mean([report.rmse for report in reports])),
            iou=float(np.mean([report.iou for report in reports])),
            chamfer=float(np.mean(finite_chamfer)) if finite_chamfer else float("inf"),
            chamfer_empty_count=len(reports) - len(finite_chamfer),
        )


# Instancia global del servicio
evaluation_service = EvaluationService()
