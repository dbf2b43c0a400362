"""
Servicio de verificación de gradientes: compara cada operador con diferencias centrales en 64 bits.
"""
import logging
from typing import Callable, List

import numpy as np

from src.config import ArchitectureConfig
from src.diffcore import ops
from src.diffcore.gradcheck import GradCheckResult, check_gradient, sample_coordinates
from src.diffcore.tape import Node, Tape
from src.networks.models import ReconstructionNetworks
from src.render.formation import ImageFormation
from src.render.projections import clamp_for_discriminator, project, render
from src.services.training_service import generator_loss, reconstruction_loss
from src.volume.resample import rotate_resample
from src.volume.views import ViewDirection

logger = logging.getLogger(__name__)

RENDER_TOLERANCE = 1e-4
NETWORK_TOLERANCE = 1e-3
# Vista no alineada con los ejes (el remuestreo interpola de verdad)
OBLIQUE_VIEW = ViewDirection.from_vector([0.37, 0.41, -0.83])
NETWORK_COORDINATES = 48


def _weighted_sum(weights: np.ndarray) -> Callable[[Node], Node]:
    """Reduce un nodo a escalar con pesos fijos (evita que la suma oculte errores que se cancelan)."""
    return lambda node: ops.sum(ops.mul(node, weights))


class GradcheckService:
    """
    Servicio que ejecuta la batería de verificaciones de gradiente.
    """

    def run_suite(
        self,
        formation: ImageFormation,
        resolution: int = 8,
        seed: int = 0,
        log_domain: bool = False,
    ) -> List[GradCheckResult]:
        """
        Verifica barridos, proyección, remuestreo, render completo, reconstrucción y redes diminutas.

        Args:
            formation: Formación de imagen a verificar
            resolution: n_p de los volúmenes de prueba (divisible por 4)
            seed: Semilla de las entradas aleatorias
            log_domain: Verificar la variante logarítmica

        Returns:
            Lista de GradCheckResult, uno por operador
        """
        rng = np.random.default_rng(seed)
        channels = formation.volume_channels
        volume = rng.uniform(0.1, 0.9, size=(channels, resolution, resolution, resolution))
        image_weights = rng.standard_normal((formation.image_channels, resolution, resolution))
        volume_weights = rng.standard_normal(volume.shape)
        reduce_image = _weighted_sum(image_weights)
        results = []

        ray = rng.uniform(0.1, 0.9, size=resolution)
        ray[resolution // 2] = 0.0
        ray_weights = rng.standard_normal(resolution)
        results.append(check_gradient(
            "cumprod", lambda tape, x: _weighted_sum(ray_weights)(ops.cumprod(x, axis=0)), ray, RENDER_TOLERANCE
        ))
        results.append(check_gradient(
            "cumsum", lambda tape, x: _weighted_sum(ray_weights)(ops.cumsum(x, axis=0)), ray, RENDER_TOLERANCE
        ))
        results.append(check_gradient(
            f"project[{formation.value}]",
            lambda tape, x: reduce_image(project(x, formation, log_domain)),
            volume,
            RENDER_TOLERANCE,
        ))
        results.append(check_gradient(
            "rotate_resample",
            lambda tape, x: _weighted_sum(volume_weights)(rotate_resample(x, OBLIQUE_VIEW)),
            volume,
            NETWORK_TOLERANCE,
            coordinates=sample_coordinates(volume.size, 256, rng),
        ))
        results.append(check_gradient(
            f"render[{formation.value}]",
            lambda tape, x: reduce_image(render(OBLIQUE_VIEW, x, formation, log_domain)),
            volume,
            NETWORK_TOLERANCE,
            coordinates=sample_coordinates(volume.size, 256, rng),
        ))
        target = rng.uniform(0.0, 1.0, size=image_weights.shape)
        results.append(check_gradient(
            "reconstruction_loss",
            lambda tape, x: reconstruction_loss(target, x, formation, log_domain),
            volume,
            RENDER_TOLERANCE,
        ))
        results.extend(self._network_checks(formation, resolution, rng, log_domain))
        return results

    def _network_checks(
        self, formation: ImageFormation, resolution: int, rng: np.random.Generator, log_domain: bool
    ) -> List[GradCheckResult]:
        architecture = ArchitectureConfig(resolution=resolution, z_dim=8, encoder_channels=(4, 8), generator_channels=(8, 4))
        networks = ReconstructionNetworks.initialize(architecture, formation, rng, dtype=np.float64)
        params = networks.params
        image = rng.uniform(0.0, 1.0, size=(1, formation.image_channels, resolution, resolution))
        volume = rng.uniform(0.1, 0.9, size=(1, formation.volume_channels, resolution, resolution, resolution))

        def bound_with(tape: Tape, name: str, x: Node):
            bound = params.bind(tape, trainable=())
            bound[name] = x
            return bound

        def encoder_norm(tape, x):
            z = networks.encode(tape.constant(image), bound_with(tape, "encoder.conv0.weight", x))
            return ops.sum(ops.square(z))

        def generator_mean(tape, x):
            bound = bound_with(tape, "generator.deconv0.weight", x)
            z = tape.constant(rng_z)
            return ops.mean(networks.generate(z, bound))

        def discriminator_log_score(tape, x):
            bound = params.bind(tape, trainable=())
            _, logits = networks.discriminate(x, bound)
            return ops.sum(ops.log_sigmoid(logits))

        def generator_objective(tape, x):
            bound = params.bind(tape, trainable=())
            view_image = render(OBLIQUE_VIEW, ops.reshape(x, x.shape[1:]), formation, log_domain)
            batch = ops.reshape(clamp_for_discriminator(view_image, formation), (1,) + view_image.shape)
            _, logits = networks.discriminate(batch, bound)
            c_rec = reconstruction_loss(image[0], ops.reshape(x, x.shape[1:]), formation, log_domain)
            return ops.add(generator_loss(logits), ops.mul(c_rec, 100.0))

        rng_z = rng.standard_normal((1, architecture.z_dim))
        return [
            check_gradient(
                "encoder", encoder_norm, params["encoder.conv0.weight"], NETWORK_TOLERANCE,
                coordinates=sample_coordinates(params["encoder.conv0.weight"].size, NETWORK_COORDINATES, rng),
            ),
            check_gradient(
                "generator", generator_mean, params["generator.deconv0.weight"], NETWORK_TOLERANCE,
                coordinates=sample_coordinates(params["generator.deconv0.weight"].size, NETWORK_COORDINATES, rng),
            ),
            check_gradient(
                "discriminator", discriminator_log_score, image, NETWORK_TOLERANCE,
                coordinates=sample_coordinates(image.size, NETWORK_COORDINATES, rng),
            ),
            check_gradient(
                "generator_objective", generator_objective, volume, NETWORK_TOLERANCE,
                coordinates=sample_coordinates(volume.size, NETWORK_COORDINATES, rng),
            ),
        ]


# Instancia global del servicio
gradcheck_service = GradcheckService()
