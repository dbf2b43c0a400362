"""
Bloques de capas compartidos por encoder, generador y discriminador.
"""
from collections import OrderedDict
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from src.diffcore import ops
from src.diffcore.tape import Node, Tape
from src.errors import ShapeMismatchError

KERNEL = 4
STRIDE = 2
PADDING = 1


class NetworkParams:
    """
    Arrays de parámetros con nombre, en un orden fijo.

    Los nombres llevan el prefijo de la red ("encoder.", "generator.", "discriminator.").
    """

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self._arrays = OrderedDict((name, np.asarray(array)) for name, array in arrays.items())

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    @property
    def names(self) -> list:
        return list(self._arrays)

    def named(self, prefix: str = "") -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, a) for n, a in self._arrays.items() if n.startswith(prefix))

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: array.shape for name, array in self._arrays.items()}

    def count(self, prefix: str = "") -> int:
        return int(sum(array.size for array in self.named(prefix).values()))

    def updated(self, arrays: Mapping[str, np.ndarray]) -> "NetworkParams":
        """Copia con algunos arrays reemplazados."""
        merged = OrderedDict(self._arrays)
        for name, array in arrays.items():
            if name not in merged:
                raise KeyError(name)
            merged[name] = array
        return NetworkParams(merged)

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams({name: array.astype(dtype) for name, array in self._arrays.items()})

    def bind(self, tape: Tape, trainable: Iterable[str] = ("",)) -> Dict[str, Node]:
        """
        Registra los parámetros en una cinta.

        Args:
            tape: Cinta destino
            trainable: Prefijos que se registran como variables; el resto, como constantes

        Returns:
            Nombre -> nodo
        """
        prefixes = tuple(trainable)
        return {
            name: (tape.variable if name.startswith(prefixes) else tape.constant)(array, name=name)
            for name, array in self._arrays.items()
        }


def init_conv(rng: np.random.Generator, std: float, out_channels: int, in_channels: int, dims: int):
    shape = (out_channels, in_channels) + (KERNEL,) * dims
    return rng.normal(0.0, std, size=shape), np.zeros(out_channels)


def init_deconv(rng: np.random.Generator, std: float, in_channels: int, out_channels: int, dims: int):
    shape = (in_channels, out_channels) + (KERNEL,) * dims
    return rng.normal(0.0, std, size=shape), np.zeros(out_channels)


def init_dense(rng: np.random.Generator, std: float, in_features: int, out_features: int):
    return rng.normal(0.0, std, size=(in_features, out_features)), np.zeros(out_features)


def conv_stack(x: Node, bound: Mapping[str, Node], prefix: str, stages: int, slope: float) -> Node:
    """Convoluciones 2D de paso 2 seguidas de leaky ReLU."""
    for i in range(stages):
        x = ops.conv(x, bound[f"{prefix}.conv{i}.weight"], bound[f"{prefix}.conv{i}.bias"], STRIDE, PADDING)
        x = ops.leaky_relu(x, slope)
    return x


def flatten(x: Node) -> Node:
    return ops.reshape(x, (x.shape[0], x.size // x.shape[0]))


def expect_shape(x: Node, expected: Sequence[int], label: str) -> None:
    if tuple(x.shape[1:]) != tuple(expected):
        raise ShapeMismatchError(f"{label}: se esperaba (B, {', '.join(map(str, expected))}), recibió {x.shape}")
