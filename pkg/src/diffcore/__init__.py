"""
Diferenciación automática en modo reverso sobre arrays densos.
"""
from src.diffcore import ops
from src.diffcore.gradcheck import GradCheckResult, check_gradient, finite_difference_check, sample_coordinates
from src.diffcore.optim import Adam
from src.diffcore.ops import cumprod, cumsum
from src.diffcore.tape import Gradients, Node, Tape

__all__ = [
    "Adam",
    "GradCheckResult",
    "Gradients",
    "Node",
    "Tape",
    "check_gradient",
    "cumprod",
    "cumsum",
    "finite_difference_check",
    "ops",
    "sample_coordinates",
]
