"""
Optimizador de momentos adaptativos (Adam) sobre parámetros con nombre.
"""
import logging
from typing import Dict, Mapping, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class Adam:
    """
    Adam con estado por nombre de parámetro.

    Args:
        learning_rate: Tasa de aprendizaje
        betas: Coeficientes de los momentos (β1, β2)
        eps: Término de estabilidad del denominador
    """

    def __init__(self, learning_rate: float = 2e-4, betas: Tuple[float, float] = (0.5, 0.999), eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._first: Dict[str, np.ndarray] = {}
        self._second: Dict[str, np.ndarray] = {}
        self._steps: Dict[str, int] = {}

    def step(
        self,
        params: Mapping[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        maximize: bool = False,
    ) -> Dict[str, np.ndarray]:
        """
        Aplica una actualización a los parámetros presentes en `grads`.

        Args:
            params: Parámetros actuales (no se modifican)
            grads: Gradientes por nombre
            maximize: Ascenso en lugar de descenso

        Returns:
            Nuevo diccionario de parámetros (los no presentes en `grads` se conservan)
        """
        updated = dict(params)
        for name, grad in grads.items():
            value = params[name]
            direction = -grad if maximize else grad
            t = self._steps.get(name, 0) + 1
            first = self.beta1 * self._first.get(name, np.zeros_like(value)) + (1 - self.beta1) * direction
            second = self.beta2 * self._second.get(name, np.zeros_like(value)) + (1 - self.beta2) * direction * direction
            self._first[name], self._second[name], self._steps[name] = first, second, t

            first_hat = first / (1 - self.beta1 ** t)
            second_hat = second / (1 - self.beta2 ** t)
            step = self.learning_rate * first_hat / (np.sqrt(second_hat) + self.eps)
            updated[name] = (value - step).astype(value.dtype)
        return updated
