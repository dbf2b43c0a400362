"""
Cinta de diferenciación automática en modo reverso.

Cada primitiva registra en la cinta su valor hacia adelante, sus entradas y una
regla de retropropagación (producto vector-Jacobiano). `Tape.backward` recorre
los nodos en orden inverso de registro, que es un orden topológico válido.
"""
import logging
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

# Regla de retropropagación: adjunto de la salida -> adjunto de cada entrada (None = sin gradiente)
VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Node:
    """Valor registrado en una cinta."""

    # Hace que `ndarray + Node` delegue en Node.__radd__
    __array_priority__ = 1000

    def __init__(
        self,
        tape: "Tape",
        index: int,
        value: np.ndarray,
        primitive: str,
        parents: Tuple["Node", ...] = (),
        vjp: Optional[VJP] = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.tape = tape
        self.index = index
        self.value = value
        self.primitive = primitive
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Node#{self.index}{label}({self.primitive}, shape={self.shape})"

    # Operadores: delegan en src.diffcore.ops
    def __add__(self, other):
        from src.diffcore import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.diffcore import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.diffcore import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.diffcore import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.diffcore import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.diffcore import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from src.diffcore import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from src.diffcore import ops
        return ops.div(other, self)

    def __neg__(self):
        from src.diffcore import ops
        return ops.neg(self)

    def __getitem__(self, index):
        from src.diffcore import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Node":
        from src.diffcore import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Node":
        from src.diffcore import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Node":
        from src.diffcore import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


class Gradients(Mapping[Node, np.ndarray]):
    """
    Resultado de `Tape.backward`.

    Indexar con un nodo solicitado devuelve su adjunto; un nodo sin camino hasta la
    pérdida recibe ceros con su forma.
    """

    def __init__(self, adjoints: Dict[int, np.ndarray], requested: Sequence[Node]):
        self._adjoints = adjoints
        self._requested = list(requested)

    def __getitem__(self, node: Node) -> np.ndarray:
        adjoint = self._adjoints.get(node.index)
        if adjoint is None:
            return np.zeros_like(node.value)
        return adjoint

    def __iter__(self) -> Iterator[Node]:
        return iter(self._requested)

    def __len__(self) -> int:
        return len(self._requested)

    def adjoint(self, node: Node) -> Optional[np.ndarray]:
        """Adjunto de cualquier nodo alcanzado (None si la propagación no pasó por él)."""
        return self._adjoints.get(node.index)


class Tape:
    """
    Registro ordenado de aplicaciones de primitivas.

    Args:
        dtype: Precisión de todos los valores (float32 para entrenar, float64 para gradcheck)
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, value, primitive, parents=(), vjp=None, requires_grad=False, name=None) -> Node:
        array = np.asarray(value, dtype=self.dtype)
        node = Node(self, len(self.nodes), array, primitive, tuple(parents), vjp, requires_grad, name)
        self.nodes.append(node)
        return node

    def variable(self, value, name: Optional[str] = None) -> Node:
        """Hoja diferenciable (parámetros, entradas a verificar)."""
        return self._append(np.array(value, dtype=self.dtype), "variable", requires_grad=True, name=name)

    def constant(self, value, name: Optional[str] = None) -> Node:
        """Hoja sin gradiente."""
        return self._append(value, "constant", name=name)

    def lift(self, value) -> Node:
        """Convierte escalares o arrays en constantes; los nodos de esta cinta pasan intactos."""
        if isinstance(value, Node):
            if value.tape is not self:
                raise ValueError("No se pueden mezclar nodos de cintas distintas")
            return value
        return self.constant(value)

    def record(self, primitive: str, value, parents: Sequence[Node], vjp: VJP) -> Node:
        """
        Registra la aplicación de una primitiva.

        Args:
            primitive: Nombre de la primitiva (diagnóstico)
            value: Valor hacia adelante
            parents: Nodos de entrada, en el orden en que `vjp` devuelve sus adjuntos
            vjp: Regla de retropropagación

        Returns:
            Nodo de salida
        """
        requires_grad = any(parent.requires_grad for parent in parents)
        return self._append(
            value,
            primitive,
            parents,
            vjp if requires_grad else None,
            requires_grad,
        )

    def backward(self, loss: Node, wrt: Optional[Iterable[Node]] = None) -> Gradients:
        """
        Propaga adjuntos desde una pérdida escalar.

        Args:
            loss: Nodo escalar de esta cinta (semilla del adjunto = 1)
            wrt: Nodos respecto de los cuales derivar; por defecto todas las variables.
                 La propagación se poda a los nodos que dependen de ellos.

        Returns:
            Gradients con el adjunto de cada nodo solicitado
        """
        if loss.tape is not self:
            raise ValueError("La pérdida pertenece a otra cinta")
        if loss.shape != ():
            raise ShapeMismatchError(f"backward requiere una pérdida escalar, recibió forma {loss.shape}")

        requested = list(wrt) if wrt is not None else [n for n in self.nodes if n.primitive == "variable"]
        targets = {node.index for node in requested}

        # Nodos que dependen de algún nodo solicitado (los únicos que vale la pena propagar)
        relevant = [False] * (loss.index + 1)
        for node in self.nodes[: loss.index + 1]:
            relevant[node.index] = node.index in targets or any(
                relevant[parent.index] for parent in node.parents if parent.index <= loss.index
            )

        adjoints: Dict[int, np.ndarray] = {loss.index: np.ones((), dtype=self.dtype)}
        for node in reversed(self.nodes[: loss.index + 1]):
            adjoint = adjoints.get(node.index)
            if adjoint is None or node.vjp is None or not relevant[node.index]:
                continue
            parent_adjoints = node.vjp(adjoint)
            for parent, contribution in zip(node.parents, parent_adjoints):
                if contribution is None or not relevant[parent.index] or not parent.requires_grad:
                    continue
                if contribution.shape != parent.shape:
                    raise ShapeMismatchError(
                        f"Adjunto de forma {contribution.shape} para el nodo {parent!r} ({node.primitive})"
                    )
                previous = adjoints.get(parent.index)
                adjoints[parent.index] = contribution if previous is None else previous + contribution

        return Gradients(adjoints, requested)
