"""
Servicio de entrenamiento: objetivo de reconstrucción adversarial y paso de actualización.

Cada paso, por elemento del lote: z = E(I_dat), v = G(z), I_view = R(ω, v) con ω uniforme
e I_front = R(ω₀, v). Luego una actualización de ascenso de Ψ sobre c_Dis y una de descenso
de (Θ, Φ) sobre c_Gen + λ·c_Rec, ambas con gradientes evaluados en los mismos parámetros.
"""
import csv
import logging
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import TrainConfig
from src.diffcore import ops
from src.diffcore.optim import Adam
from src.diffcore.tape import Gradients, Node, Tape
from src.errors import ConfigurationError, ShapeMismatchError, TrainingDivergedError
from src.integrations.checkpoint_files import save_checkpoint
from src.integrations.dataset_files import ImageCollection
from src.networks.models import ReconstructionNetworks
from src.render.formation import ImageFormation
from src.render.projections import clamp_for_discriminator, project, render, render_batch
from src.services.evaluation_service import EvalSummary, evaluation_service
from src.volume.grid import Image, VoxelGrid
from src.volume.resample import rotate_resample
from src.volume.views import CANONICAL_VIEW, sample_view

logger = logging.getLogger(__name__)

DISCRIMINATOR_PREFIX = "discriminator."
GENERATOR_PREFIXES = ("encoder.", "generator.")
STEP_LOG_NAME = "steps.csv"
LAST_CHECKPOINT = "last.pnet"


# ---------------------------------------------------------------------------
# Costes
# ---------------------------------------------------------------------------

def squared_error(images, rendered: Node) -> Node:
    """Σ (y − ŷ)² por muestra sobre píxeles y canales; media sobre el lote si lo hay."""
    difference = ops.sub(images, rendered)
    per_sample = ops.sum(ops.square(difference), axis=tuple(range(difference.ndim - 3, difference.ndim)))
    return ops.mean(per_sample) if per_sample.ndim else per_sample


def reconstruction_loss(
    image: Union[Image, np.ndarray, Node],
    volume: Union[VoxelGrid, Node],
    formation: ImageFormation,
    log_domain: bool = False,
) -> Union[float, Node]:
    """
    ‖I − R(ω₀, v)‖² sumado sobre píxeles y canales.

    Con un VoxelGrid devuelve un float; con un nodo devuelve un nodo diferenciable.
    """
    if isinstance(volume, VoxelGrid):
        tape = Tape(volume.values.dtype)
        return float(reconstruction_loss(image, tape.constant(volume.values), formation, log_domain).value)
    if isinstance(image, Image):
        image = image.values
    front = render(CANONICAL_VIEW, volume, formation, log_domain)
    image_shape = tuple(image.shape) if isinstance(image, Node) else np.shape(image)
    if image_shape != front.shape:
        raise ShapeMismatchError(f"reconstruction_loss: imagen {image_shape} vs render {front.shape}")
    return squared_error(image, front)


def discriminator_loss(real_logits: Node, fake_logits: Node) -> Node:
    """log D(I_dat) + log(1 − D(I_view)) en forma log-sigmoide estable, media del lote (a maximizar)."""
    return ops.mean(ops.add(ops.log_sigmoid(real_logits), ops.log_sigmoid(ops.neg(fake_logits))))


def generator_loss(fake_logits: Node, non_saturating: bool = False) -> Node:
    """log(1 − D(I_view)) (a minimizar); la variante no saturante usa −log D(I_view)."""
    if non_saturating:
        return ops.neg(ops.mean(ops.log_sigmoid(fake_logits)))
    return ops.mean(ops.log_sigmoid(ops.neg(fake_logits)))


class AdversarialObjective:
    """
    Costes del paso de actualización.

    Las subclases pueden sustituir cualquier coste (p. ej. por una constante) para aislar
    qué parámetros mueve cada uno.
    """

    def __init__(self, lambda_rec: float = 100.0, non_saturating: bool = False):
        if lambda_rec < 0:
            raise ConfigurationError(f"lambda_rec debe ser >= 0, recibió {lambda_rec}")
        self.lambda_rec = lambda_rec
        self.non_saturating = non_saturating

    @classmethod
    def from_config(cls, config: TrainConfig) -> "AdversarialObjective":
        return cls(config.lambda_rec, config.non_saturating)

    def discriminator_cost(self, real_logits: Node, fake_logits: Node) -> Node:
        return discriminator_loss(real_logits, fake_logits)

    def generator_cost(self, fake_logits: Node) -> Node:
        return generator_loss(fake_logits, self.non_saturating)

    def reconstruction_cost(self, images: Node, front: Node) -> Node:
        return squared_error(images, front)

    def generator_objective(self, c_gen: Node, c_rec: Node) -> Node:
        return ops.add(c_gen, ops.mul(c_rec, self.lambda_rec))


# ---------------------------------------------------------------------------
# Estado y resultados
# ---------------------------------------------------------------------------

@dataclass
class StepReport:
    """Valores de un paso; un paso con valores no finitos se marca como divergente y no actualiza."""
    step: int
    c_dis: float
    c_gen: float
    c_rec: float
    grad_norm_discriminator: float
    grad_norm_generator: float
    seconds: float
    diverged: bool = False


@dataclass
class TrainingState:
    """Redes y optimizadores; el estado de Adam no forma parte del checkpoint."""
    networks: ReconstructionNetworks
    discriminator_optimizer: Adam
    generator_optimizer: Adam
    step: int = 0

    @classmethod
    def create(cls, networks: ReconstructionNetworks, config: TrainConfig) -> "TrainingState":
        def adam():
            return Adam(config.learning_rate, (config.beta1, config.beta2), config.adam_eps)
        return cls(networks, adam(), adam())


@dataclass
class TrainingResult:
    """Resultado de `train`."""
    checkpoints: List[Path]
    reports: List[StepReport]
    step_log: Path
    state: TrainingState
    evaluation: Optional[EvalSummary] = None
    holdout_indices: List[int] = field(default_factory=list)


def _norm(grads: Gradients) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(grads[node], dtype=np.float64))) for node in grads)))


def _all_finite(values) -> bool:
    return all(np.all(np.isfinite(value)) for value in values)


class TrainingService:
    """
    Servicio de entrenamiento de las tres redes.
    """

    def train_step(
        self,
        images: np.ndarray,
        rng: np.random.Generator,
        state: TrainingState,
        config: TrainConfig,
        objective: Optional[AdversarialObjective] = None,
        strict: bool = False,
    ) -> StepReport:
        """
        Ejecuta un paso de actualización sobre un lote de imágenes de datos.

        Args:
            images: Lote (B, C, n, n) de imágenes reales
            rng: Fuente de las vistas (una por elemento del lote)
            state: Estado mutable (redes y optimizadores)
            config: Hiperparámetros
            objective: Costes (por defecto los del método con la λ de config)
            strict: Lanzar TrainingDivergedError en lugar de solo marcar el paso

        Returns:
            StepReport del paso
        """
        if images.ndim != 4 or images.shape[0] < 1:
            raise ShapeMismatchError(f"train_step requiere un lote no vacío (B, C, n, n), recibió {images.shape}")
        objective = objective or AdversarialObjective.from_config(config)
        formation = config.formation
        networks = state.networks
        started = time.perf_counter()

        tape = Tape(np.dtype(config.dtype))
        bound = networks.params.bind(tape)
        real = tape.constant(images)
        views = [sample_view(rng) for _ in range(images.shape[0])]

        volumes = networks.generate(networks.encode(real, bound), bound)
        view_images = render_batch(views, volumes, formation, config.log_domain)
        front_images = project(volumes, formation, config.log_domain)
        _, real_logits = networks.discriminate(real, bound)
        _, fake_logits = networks.discriminate(clamp_for_discriminator(view_images, formation), bound)

        c_dis = objective.discriminator_cost(real_logits, fake_logits)
        c_gen = objective.generator_cost(fake_logits)
        c_rec = objective.reconstruction_cost(real, front_images)
        generator_total = objective.generator_objective(c_gen, c_rec)

        discriminator_nodes = [node for name, node in bound.items() if name.startswith(DISCRIMINATOR_PREFIX)]
        generator_nodes = [node for name, node in bound.items() if name.startswith(GENERATOR_PREFIXES)]
        grads_d = tape.backward(c_dis, wrt=discriminator_nodes)
        grads_g = tape.backward(generator_total, wrt=generator_nodes)

        report = StepReport(
            step=state.step,
            c_dis=float(c_dis.value),
            c_gen=float(c_gen.value),
            c_rec=float(c_rec.value),
            grad_norm_discriminator=_norm(grads_d),
            grad_norm_generator=_norm(grads_g),
            seconds=0.0,
        )
        losses = (report.c_dis, report.c_gen, report.c_rec, report.grad_norm_discriminator, report.grad_norm_generator)
        if not _all_finite(losses):
            report.diverged = True
            report.seconds = time.perf_counter() - started
            logger.warning(f"⚠️ [TRAIN] paso {state.step} divergente (valores no finitos); parámetros sin cambios")
            if strict:
                raise TrainingDivergedError(f"Paso {state.step} divergente: {asdict(report)}")
            state.step += 1
            return report

        params = networks.params
        updated = state.discriminator_optimizer.step(
            params.named(DISCRIMINATOR_PREFIX), {node.name: grads_d[node] for node in discriminator_nodes}, maximize=True
        )
        updated.update(state.generator_optimizer.step(
            {name: params[name] for name in params.names if name.startswith(GENERATOR_PREFIXES)},
            {node.name: grads_g[node] for node in generator_nodes},
        ))
        state.networks = networks.with_params(params.updated(updated))
        state.step += 1
        report.seconds = time.perf_counter() - started
        return report

    def train(
        self,
        dataset: ImageCollection,
        config: TrainConfig,
        output_dir=None,
        truths: Optional[Mapping[str, VoxelGrid]] = None,
        objective: Optional[AdversarialObjective] = None,
        strict: bool = False,
    ) -> TrainingResult:
        """
        Entrena desde cero y escribe checkpoints PNET y el log de pasos.

        Args:
            dataset: Colección de imágenes (no vacía)
            config: Hiperparámetros validados
            output_dir: Directorio de salida (por defecto config.output_dir)
            truths: Volúmenes de verdad por receta para la evaluación de las formas reservadas;
                    si falta, se leen del dataset
            objective: Costes (por defecto los del método)
            strict: Abortar ante un paso divergente

        Returns:
            TrainingResult con checkpoints, informes de paso y evaluación reservada
        """
        formation = config.formation
        if len(dataset) == 0:
            raise ConfigurationError("El dataset de entrenamiento está vacío")
        if dataset.channels != formation.image_channels:
            raise ConfigurationError(
                f"El dataset tiene {dataset.channels} canal(es) y '{formation.value}' requiere {formation.image_channels}"
            )
        if dataset.resolution != config.n_p:
            raise ConfigurationError(f"Imágenes de {dataset.resolution}px para n_p={config.n_p}")

        train_indices, holdout_indices = self._split_holdout(dataset, config.holdout_shapes)
        out = Path(output_dir or config.output_dir)
        out.mkdir(parents=True, exist_ok=True)

        init_seed, batch_seed, view_seed = np.random.SeedSequence(config.seed).spawn(3)
        networks = ReconstructionNetworks.initialize(
            config.architecture(), formation, np.random.default_rng(init_seed), dtype=np.dtype(config.dtype)
        )
        state = TrainingState.create(networks, config)
        batch_rng, view_rng = np.random.default_rng(batch_seed), np.random.default_rng(view_seed)
        objective = objective or AdversarialObjective.from_config(config)

        logger.info(
            f"🔄 [TRAIN] {config.steps} pasos, lote {config.batch_size}, {formation.value}, n_p={config.n_p}, "
            f"λ={config.lambda_rec}, {len(train_indices)} imágenes de entrenamiento, {len(holdout_indices)} reservadas"
        )
        checkpoints = [self._checkpoint(state, out, 0)]
        step_log = out / STEP_LOG_NAME
        reports: List[StepReport] = []
        train_images = dataset.images[train_indices].astype(config.dtype)

        with open(step_log, "w", newline="", encoding="utf-8") as log_file:
            writer = csv.writer(log_file, lineterminator="\n")
            writer.writerow(list(StepReport.__dataclass_fields__))
            for step in range(1, config.steps + 1):
                batch = train_images[batch_rng.integers(0, len(train_images), size=config.batch_size)]
                report = self.train_step(batch, view_rng, state, config, objective, strict)
                reports.append(report)
                writer.writerow(list(asdict(report).values()))
                if step % config.log_every == 0 or step == 1:
                    logger.info(
                        f"[TRAIN] paso {step}/{config.steps}: c_dis={report.c_dis:.4f} c_gen={report.c_gen:.4f} "
                        f"c_rec={report.c_rec:.4f} |∇Ψ|={report.grad_norm_discriminator:.3e} "
                        f"|∇ΘΦ|={report.grad_norm_generator:.3e} ({report.seconds:.2f}s)"
                    )
                if step % config.checkpoint_every == 0 or step == config.steps:
                    checkpoints.append(self._checkpoint(state, out, step))

        evaluation = None
        if holdout_indices:
            evaluation = self._evaluate_holdout(dataset, holdout_indices, state.networks, config, truths)
        logger.info(f"✅ [TRAIN] Entrenamiento completado: {len(checkpoints)} checkpoints en {out}")
        return TrainingResult(checkpoints, reports, step_log, state, evaluation, holdout_indices)

    @staticmethod
    def _split_holdout(dataset: ImageCollection, holdout_shapes: Optional[int]) -> Tuple[List[int], List[int]]:
        """Reserva todas las imágenes de las últimas `holdout_shapes` recetas (en orden de aparición).

        Con `holdout_shapes=None` se reserva una receta cuando hay procedencia y al menos dos recetas.
        """
        if holdout_shapes is None:
            recipe_count = len({sample.recipe_id for sample in dataset.samples})
            holdout_shapes = 1 if recipe_count >= 2 else 0
            if holdout_shapes == 0:
                logger.warning("⚠️ [TRAIN] Sin procedencia de al menos dos formas: el entrenamiento no se evaluará")
        if holdout_shapes == 0:
            return list(range(len(dataset))), []
        if not dataset.samples:
            raise ConfigurationError("holdout_shapes requiere un dataset con procedencia (manifest.csv)")
        recipes = list(dict.fromkeys(sample.recipe_id for sample in dataset.samples))
        if holdout_shapes >= len(recipes):
            raise ConfigurationError(f"holdout_shapes={holdout_shapes} deja el entrenamiento sin formas ({len(recipes)} recetas)")
        reserved = set(recipes[-holdout_shapes:])
        train = [i for i, sample in enumerate(dataset.samples) if sample.recipe_id not in reserved]
        holdout = [i for i, sample in enumerate(dataset.samples) if sample.recipe_id in reserved]
        return train, holdout

    @staticmethod
    def _checkpoint(state: TrainingState, out: Path, step: int) -> Path:
        path = save_checkpoint(state.networks.params, out / f"checkpoint_{step:06d}.pnet")
        shutil.copyfile(path, out / LAST_CHECKPOINT)
        return path

    def _evaluate_holdout(
        self,
        dataset: ImageCollection,
        holdout_indices: Sequence[int],
        networks: ReconstructionNetworks,
        config: TrainConfig,
        truths: Optional[Mapping[str, VoxelGrid]],
    ) -> EvalSummary:
        """Reconstruye imágenes reservadas y las compara con la verdad llevada al marco de su vista."""
        cache: Dict[str, VoxelGrid] = {}
        per_recipe: Dict[str, int] = {}
        reports = []
        for index in holdout_indices:
            sample = dataset.samples[index]
            if per_recipe.get(sample.recipe_id, 0) >= config.eval_views_per_shape:
                continue
            per_recipe[sample.recipe_id] = per_recipe.get(sample.recipe_id, 0) + 1
            truth = truths[sample.recipe_id] if truths is not None else dataset.load_truth(sample, cache)
            recon = self.reconstruct(dataset.images[index], networks)
            reports.append(evaluation_service.evaluate(
                recon,
                rotate_resample(truth, sample.view),
                [config.formation],
                view_seed=config.seed,
                threshold=config.threshold,
                epsilon=config.chamfer_epsilon,
                label=f"{sample.recipe_id}#{index}",
            ))
        summary = evaluation_service.aggregate(reports)
        logger.info(
            f"🔍 [TRAIN] Evaluación reservada ({summary.count} imágenes): IoU={summary.iou:.4f} "
            f"RMSE={summary.rmse:.4f} CD={summary.chamfer:.4f}"
        )
        return summary

    @staticmethod
    def reconstruct(image: Union[Image, np.ndarray], networks: ReconstructionNetworks, dtype=np.float32) -> VoxelGrid:
        """
        Reconstrucción de una sola imagen: v = G(E(I)) en el marco de cámara de la imagen.
        """
        values = image.values if isinstance(image, Image) else np.asarray(image)
        tape = Tape(dtype)
        bound = networks.params.bind(tape, trainable=())
        volume = networks.generate(networks.encode(tape.constant(values[None]), bound), bound)
        return VoxelGrid(volume.value[0])


# Instancia global del servicio
training_service = TrainingService()
