"""
Verificación de gradientes analíticos contra diferencias centrales.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from src.diffcore.tape import Node, Tape

logger = logging.getLogger(__name__)

# f(tape, x) -> nodo escalar
ScalarFunction = Callable[[Tape, Node], Node]


@dataclass
class GradCheckResult:
    """Resultado de verificar un operador."""
    operator: str
    max_relative_error: float
    tolerance: float
    finite: bool

    @property
    def passed(self) -> bool:
        return self.finite and self.max_relative_error < self.tolerance


def _evaluate(f: ScalarFunction, x: np.ndarray) -> float:
    tape = Tape(np.float64)
    return float(f(tape, tape.constant(x)).value)


def finite_difference_check(
    f: ScalarFunction,
    x: np.ndarray,
    h: float = 1e-4,
    coordinates: Optional[Iterable[int]] = None,
) -> float:
    """
    Error relativo máximo entre el gradiente analítico y diferencias centrales (64 bits).

    Args:
        f: Función escalar construida sobre la cinta que recibe
        x: Punto de evaluación
        h: Paso de las diferencias centrales
        coordinates: Índices planos a verificar (por defecto todos)

    Returns:
        max_i |analítico_i − numérico_i| / max(1, |analítico_i|); inf si algún valor no es finito
    """
    if h <= 0:
        raise ValueError("h debe ser positivo")
    x = np.array(x, dtype=np.float64)
    tape = Tape(np.float64)
    variable = tape.variable(x)
    loss = f(tape, variable)
    if not np.all(np.isfinite(loss.value)):
        logger.warning("⚠️ [GRADCHECK] la función devuelve valores no finitos")
        return float("inf")
    analytic = tape.backward(loss, wrt=[variable])[variable].reshape(-1)

    indices = range(x.size) if coordinates is None else coordinates
    worst = 0.0
    for i in indices:
        shifted = x.reshape(-1).copy()
        shifted[i] += h
        upper = _evaluate(f, shifted.reshape(x.shape))
        shifted[i] -= 2 * h
        lower = _evaluate(f, shifted.reshape(x.shape))
        numeric = (upper - lower) / (2 * h)
        if not (np.isfinite(numeric) and np.isfinite(analytic[i])):
            return float("inf")
        worst = max(worst, abs(analytic[i] - numeric) / max(1.0, abs(analytic[i])))
    return worst


def check_gradient(
    operator: str,
    f: ScalarFunction,
    x: np.ndarray,
    tolerance: float = 1e-4,
    h: float = 1e-4,
    coordinates: Optional[Iterable[int]] = None,
) -> GradCheckResult:
    """Envuelve `finite_difference_check` en un GradCheckResult y lo registra en el log."""
    error = finite_difference_check(f, x, h=h, coordinates=coordinates)
    result = GradCheckResult(operator, error, tolerance, bool(np.isfinite(error)))
    status = "✅" if result.passed else "❌"
    logger.info(f"{status} [GRADCHECK] {operator}: error relativo máx {error:.3e} (tolerancia {tolerance:.0e})")
    return result


def sample_coordinates(size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Subconjunto ordenado de índices planos para verificar arrays grandes."""
    if count >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=count, replace=False))
