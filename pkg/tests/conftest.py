"""
Fixtures compartidas de la batería de tests.
"""
import numpy as np
import pytest

from src.config import ArchitectureConfig
from src.diffcore.tape import Tape
from src.networks.models import ReconstructionNetworks
from src.render.formation import ImageFormation
from src.services.synthesis_service import Primitive, PrimitiveKind, ShapeRecipe, synthesis_service


@pytest.fixture
def rng():
    """Generador sembrado para que cada test sea reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def tape64():
    """Cinta en 64 bits (oráculos y diferencias finitas)."""
    return Tape(np.float64)


@pytest.fixture
def tiny_architecture():
    """Arquitectura diminuta de n_p = 8."""
    return ArchitectureConfig.from_preset("tiny8")


@pytest.fixture
def tiny_networks(tiny_architecture):
    """Redes diminutas para AO, inicializadas con semilla fija."""
    return ReconstructionNetworks.initialize(tiny_architecture, ImageFormation.AO, np.random.default_rng(0))


@pytest.fixture
def centered_sphere():
    """Receta de una esfera centrada de radio 0.5."""
    return ShapeRecipe("sphere-centered", (Primitive(PrimitiveKind.SPHERE, radius=0.5),))


@pytest.fixture
def sphere_grid(centered_sphere):
    """Esfera centrada voxelizada a 16³."""
    return synthesis_service.voxelize(centered_sphere, 16)
