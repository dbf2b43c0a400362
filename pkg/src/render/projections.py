"""
Capas de renderizado: proyecciones ρ a lo largo del eje de profundidad y R(ω, v) = ρ(T(ω)v).

Los volúmenes en marco de cámara tienen forma (..., n_c, n_z, n_y, n_x); el índice 0 de
profundidad es el vóxel más cercano a la cámara. Las imágenes resultantes tienen forma
(..., C, n_y, n_x).
"""
import logging
from typing import Sequence, Union

import numpy as np

from src.diffcore import ops
from src.diffcore.tape import Node, Tape
from src.errors import ShapeMismatchError
from src.render.formation import ImageFormation
from src.volume.grid import Image, VoxelGrid
from src.volume.resample import rotate_resample
from src.volume.views import ViewDirection

logger = logging.getLogger(__name__)

DEPTH_AXIS = -3
# Cota inferior de la transmitancia antes del logaritmo
LOG_FLOOR = 1e-7


def _channels(volume: Node, start: int, stop: int) -> Node:
    index = (slice(None),) * (volume.ndim - 4) + (slice(start, stop),)
    return ops.getitem(volume, index)


def _check(volume: Node, formation: ImageFormation) -> None:
    if volume.ndim < 4:
        raise ShapeMismatchError(f"Se esperaba un volumen (..., n_c, n, n, n), recibió {volume.shape}")
    formation.check_volume(volume.shape[-4])


def _transmittance(absorption: Node, log_domain: bool) -> Node:
    """∏_{j≤i} (1 − a_j) a lo largo de la profundidad (producto acumulado o suma de logaritmos)."""
    remaining = 1.0 - absorption
    if log_domain:
        return ops.exp(ops.cumsum(ops.log(ops.clip(remaining, LOG_FLOOR, 1.0)), axis=DEPTH_AXIS))
    return ops.cumprod(remaining, axis=DEPTH_AXIS)


def project_vh(volume: Node) -> Node:
    """Envolvente visual suave: 1 − exp(−∑ v_i)."""
    _check(volume, ImageFormation.VH)
    return 1.0 - ops.exp(ops.neg(ops.sum(volume, axis=DEPTH_AXIS)))


def project_ao(volume: Node, log_domain: bool = False) -> Node:
    """Solo absorción: 1 − ∏ (1 − v_i)."""
    _check(volume, ImageFormation.AO)
    transmittance = _transmittance(volume, log_domain)
    depth = volume.shape[DEPTH_AXIS]
    last = (slice(None),) * (volume.ndim - 3) + (slice(depth - 1, depth),)
    return 1.0 - ops.reshape(ops.getitem(transmittance, last), volume.shape[:-3] + volume.shape[-2:])


def project_ea(volume: Node, mode: ImageFormation = ImageFormation.EA_PAPER, log_domain: bool = False) -> Node:
    """
    Emisión-absorción.

    EA_PAPER: ∑_i (1 − ∏_{j≤i}(1 − a_j)) · e_i, sin acotar (rango [0, n_z]).
    EA_COMPOSITE: ∑_i ∏_{j<i}(1 − a_j) · a_i · e_i, composición frente-atrás acotada por 1.
    """
    if not mode.is_emission:
        raise ValueError(f"project_ea requiere un modo de emisión, recibió {mode.value}")
    _check(volume, mode)
    emission = _channels(volume, 0, 3)
    absorption = _channels(volume, 3, 4)
    transmittance = _transmittance(absorption, log_domain)

    if mode is ImageFormation.EA_PAPER:
        weights = 1.0 - transmittance
    else:
        front = absorption.shape[:-3] + (1,) + absorption.shape[-2:]
        depth = absorption.shape[DEPTH_AXIS]
        before = (slice(None),) * (absorption.ndim - 3) + (slice(0, depth - 1),)
        exclusive = ops.concat(
            [volume.tape.constant(np.ones(front)), ops.getitem(transmittance, before)],
            axis=DEPTH_AXIS,
        )
        weights = exclusive * absorption
    return ops.sum(weights * emission, axis=DEPTH_AXIS)


def project(volume: Node, formation: ImageFormation, log_domain: bool = False) -> Node:
    """Aplica la proyección ρ del modo dado a un volumen ya en marco de cámara."""
    if formation is ImageFormation.VH:
        return project_vh(volume)
    if formation is ImageFormation.AO:
        return project_ao(volume, log_domain=log_domain)
    return project_ea(volume, formation, log_domain=log_domain)


def render(
    view: ViewDirection,
    volume: Union[VoxelGrid, Node],
    formation: ImageFormation,
    log_domain: bool = False,
) -> Union[Image, Node]:
    """
    R(ω, v) = ρ(T(ω)v).

    Un VoxelGrid produce un Image; un nodo (n_c, n, n, n) produce un nodo (C, n, n).
    """
    if isinstance(volume, VoxelGrid):
        formation.check_volume(volume.channels)
        tape = Tape(volume.values.dtype)
        node = render(view, tape.constant(volume.values), formation, log_domain)
        return Image(node.value)
    _check(volume, formation)
    return project(rotate_resample(volume, view), formation, log_domain=log_domain)


def render_batch(
    views: Sequence[ViewDirection],
    volumes: Node,
    formation: ImageFormation,
    log_domain: bool = False,
) -> Node:
    """Renderiza cada elemento de un lote (B, n_c, n, n, n) desde su propia vista."""
    if volumes.ndim != 5 or volumes.shape[0] != len(views):
        raise ShapeMismatchError(f"render_batch: {len(views)} vistas para un lote de forma {volumes.shape}")
    rotated = [rotate_resample(ops.getitem(volumes, b), view) for b, view in enumerate(views)]
    return project(ops.stack(rotated, axis=0), formation, log_domain=log_domain)


def clamp_for_discriminator(image: Node, formation: ImageFormation) -> Node:
    """Acota a [0,1] las imágenes EA_PAPER antes del discriminador; los demás modos ya lo están."""
    if formation is ImageFormation.EA_PAPER:
        return ops.clip(image, 0.0, 1.0)
    return image
