"""
Encoder E_Φ, generador G_Θ y discriminador D_Ψ.
"""
import logging
from collections import OrderedDict
from typing import Mapping, Tuple

import numpy as np

from src.config import ArchitectureConfig
from src.diffcore import ops
from src.diffcore.tape import Node
from src.networks.layers import (
    PADDING,
    STRIDE,
    NetworkParams,
    conv_stack,
    expect_shape,
    flatten,
    init_conv,
    init_deconv,
    init_dense,
)
from src.render.formation import ImageFormation

logger = logging.getLogger(__name__)

NETWORKS = ("encoder", "generator", "discriminator")


class ReconstructionNetworks:
    """
    Las tres redes con su arquitectura y sus parámetros.

    Los métodos `encode`, `generate` y `discriminate` operan sobre nodos de una cinta y
    leen los parámetros de un diccionario producido por `NetworkParams.bind`.
    """

    def __init__(self, architecture: ArchitectureConfig, volume_channels: int, image_channels: int, params: NetworkParams):
        self.architecture = architecture
        self.volume_channels = volume_channels
        self.image_channels = image_channels
        self.params = params

    @classmethod
    def initialize(
        cls,
        architecture: ArchitectureConfig,
        formation: ImageFormation,
        rng: np.random.Generator,
        dtype=np.float32,
    ) -> "ReconstructionNetworks":
        """
        Inicializa pesos N(0, init_std) y sesgos nulos en un orden de nombres fijo.

        Args:
            architecture: Anchos y resolución
            formation: Determina los canales de volumen e imagen
            rng: Fuente aleatoria sembrada

        Returns:
            ReconstructionNetworks listo para entrenar
        """
        std = architecture.init_std
        image_channels, volume_channels = formation.image_channels, formation.volume_channels
        arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()

        for network in ("encoder", "discriminator"):
            channels = (image_channels,) + architecture.encoder_channels
            for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
                arrays[f"{network}.conv{i}.weight"], arrays[f"{network}.conv{i}.bias"] = init_conv(rng, std, c_out, c_in, 2)
            flat = architecture.encoder_channels[-1] * architecture.encoder_output_resolution ** 2
            out_features = architecture.z_dim if network == "encoder" else 1
            arrays[f"{network}.dense.weight"], arrays[f"{network}.dense.bias"] = init_dense(rng, std, flat, out_features)

        base = architecture.generator_base_resolution
        first = architecture.generator_channels[0]
        arrays["generator.dense.weight"], arrays["generator.dense.bias"] = init_dense(
            rng, std, architecture.z_dim, first * base ** 3
        )
        channels = architecture.generator_channels + (volume_channels,)
        for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
            arrays[f"generator.deconv{i}.weight"], arrays[f"generator.deconv{i}.bias"] = init_deconv(rng, std, c_in, c_out, 3)

        params = NetworkParams(OrderedDict((name, array.astype(dtype)) for name, array in arrays.items()))
        counts = ", ".join(f"{network}={params.count(network + '.'):,}" for network in NETWORKS)
        logger.info(f"🧠 Redes inicializadas ({counts} parámetros)")
        return cls(architecture, volume_channels, image_channels, params)

    @classmethod
    def from_params(cls, params: NetworkParams) -> "ReconstructionNetworks":
        """Reconstruye las redes de un checkpoint infiriendo la arquitectura de las formas."""
        architecture, volume_channels, image_channels = ArchitectureConfig.from_params(params.shapes())
        return cls(architecture, volume_channels, image_channels, params)

    def with_params(self, params: NetworkParams) -> "ReconstructionNetworks":
        return ReconstructionNetworks(self.architecture, self.volume_channels, self.image_channels, params)

    def _image_shape(self) -> Tuple[int, int, int]:
        n = self.architecture.resolution
        return (self.image_channels, n, n)

    def encode(self, images: Node, bound: Mapping[str, Node]) -> Node:
        """Imágenes (B, C, n, n) -> códigos latentes (B, z_dim)."""
        expect_shape(images, self._image_shape(), "encode")
        features = conv_stack(images, bound, "encoder", len(self.architecture.encoder_channels), self.architecture.leaky_slope)
        return ops.dense(flatten(features), bound["encoder.dense.weight"], bound["encoder.dense.bias"])

    def generate(self, z: Node, bound: Mapping[str, Node]) -> Node:
        """Códigos (B, z_dim) -> volúmenes (B, n_c, n, n, n) con valores en [0,1]."""
        expect_shape(z, (self.architecture.z_dim,), "generate")
        base = self.architecture.generator_base_resolution
        x = ops.dense(z, bound["generator.dense.weight"], bound["generator.dense.bias"])
        x = ops.reshape(x, (z.shape[0], self.architecture.generator_channels[0], base, base, base))
        x = ops.leaky_relu(x, self.architecture.leaky_slope)
        stages = len(self.architecture.generator_channels)
        for i in range(stages):
            x = ops.conv_transpose(
                x, bound[f"generator.deconv{i}.weight"], bound[f"generator.deconv{i}.bias"], STRIDE, PADDING
            )
            if i < stages - 1:
                x = ops.leaky_relu(x, self.architecture.leaky_slope)
        return ops.sigmoid(x)

    def discriminate(self, images: Node, bound: Mapping[str, Node]) -> Tuple[Node, Node]:
        """Imágenes (B, C, n, n) -> (puntuación en (0,1), logit), ambos de forma (B,)."""
        expect_shape(images, self._image_shape(), "discriminate")
        features = conv_stack(
            images, bound, "discriminator", len(self.architecture.encoder_channels), self.architecture.leaky_slope
        )
        logits = ops.dense(flatten(features), bound["discriminator.dense.weight"], bound["discriminator.dense.bias"])
        logits = ops.reshape(logits, (images.shape[0],))
        return ops.sigmoid(logits), logits
