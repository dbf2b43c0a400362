"""
Primitivas diferenciables sobre arrays densos.

Cada función recibe nodos (o constantes, que se elevan a la cinta del primer nodo),
calcula el valor con numpy/scipy y registra su regla de retropropagación.
"""
import itertools
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from src.diffcore.tape import Node, Tape
from src.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

Operand = Union[Node, np.ndarray, float, int]


def _tape_of(*operands) -> Tape:
    for operand in operands:
        if isinstance(operand, Node):
            return operand.tape
    raise ValueError("Al menos un operando debe ser un nodo de una cinta")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Suma el adjunto sobre los ejes que la difusión (broadcasting) agregó o expandió."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(primitive, a, b, value_fn, grad_a, grad_b) -> Node:
    tape = _tape_of(a, b)
    a, b = tape.lift(a), tape.lift(b)
    out = value_fn(a.value, b.value)

    def vjp(g):
        return (
            _unbroadcast(grad_a(g, a.value, b.value, out), a.shape),
            _unbroadcast(grad_b(g, a.value, b.value, out), b.shape),
        )

    return tape.record(primitive, out, (a, b), vjp)


def _unary(primitive, x: Node, value, grad) -> Node:
    return x.tape.record(primitive, value, (x,), lambda g: (grad(g),))


# ---------------------------------------------------------------------------
# Aritmética elemento a elemento
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Node:
    return _binary("add", a, b, np.add, lambda g, x, y, o: g, lambda g, x, y, o: g)


def sub(a: Operand, b: Operand) -> Node:
    return _binary("sub", a, b, np.subtract, lambda g, x, y, o: g, lambda g, x, y, o: -g)


def mul(a: Operand, b: Operand) -> Node:
    return _binary("mul", a, b, np.multiply, lambda g, x, y, o: g * y, lambda g, x, y, o: g * x)


def div(a: Operand, b: Operand) -> Node:
    return _binary(
        "div", a, b, np.divide,
        lambda g, x, y, o: g / y,
        lambda g, x, y, o: -g * o / y,
    )


def neg(x: Node) -> Node:
    return _unary("neg", x, -x.value, lambda g: -g)


def square(x: Node) -> Node:
    return _unary("square", x, x.value * x.value, lambda g: 2 * g * x.value)


def exp(x: Node) -> Node:
    out = np.exp(x.value)
    return _unary("exp", x, out, lambda g: g * out)


def log(x: Node) -> Node:
    return _unary("log", x, np.log(x.value), lambda g: g / x.value)


def sigmoid(x: Node) -> Node:
    out = special.expit(x.value)
    return _unary("sigmoid", x, out, lambda g: g * out * (1 - out))


def log_sigmoid(x: Node) -> Node:
    """log(sigmoid(x)) estable para logits grandes en valor absoluto."""
    return _unary("log_sigmoid", x, special.log_expit(x.value), lambda g: g * special.expit(-x.value))


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    positive = x.value > 0
    out = np.where(positive, x.value, slope * x.value)
    return _unary("leaky_relu", x, out, lambda g: np.where(positive, g, slope * g))


def clip(x: Node, low: float, high: float) -> Node:
    inside = (x.value >= low) & (x.value <= high)
    return _unary("clip", x, np.clip(x.value, low, high), lambda g: g * inside)


# ---------------------------------------------------------------------------
# Reducciones y manipulación de forma
# ---------------------------------------------------------------------------

def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def sum(x: Node, axis=None, keepdims: bool = False) -> Node:
    axes = _normalize_axes(axis, x.ndim)
    out = np.sum(x.value, axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return x.tape.record("sum", out, (x,), vjp)


def mean(x: Node, axis=None, keepdims: bool = False) -> Node:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(x: Node, shape: Sequence[int]) -> Node:
    return _unary("reshape", x, x.value.reshape(shape), lambda g: g.reshape(x.shape))


def transpose(x: Node, axes: Sequence[int]) -> Node:
    inverse = np.argsort(axes)
    return _unary("transpose", x, np.transpose(x.value, axes), lambda g: np.transpose(g, inverse))


def flip(x: Node, axis: int) -> Node:
    return _unary("flip", x, np.flip(x.value, axis), lambda g: np.flip(g, axis))


def getitem(x: Node, index) -> Node:
    def vjp(g):
        grad = np.zeros_like(x.value)
        np.add.at(grad, index, g)
        return (grad,)

    return x.tape.record("getitem", x.value[index], (x,), vjp)


def concat(nodes: Sequence[Operand], axis: int = 0) -> Node:
    tape = _tape_of(*nodes)
    nodes = [tape.lift(node) for node in nodes]
    out = np.concatenate([node.value for node in nodes], axis=axis)
    splits = np.cumsum([node.shape[axis] for node in nodes])[:-1]
    return tape.record("concat", out, nodes, lambda g: np.split(g, splits, axis=axis))


def stack(nodes: Sequence[Operand], axis: int = 0) -> Node:
    tape = _tape_of(*nodes)
    nodes = [tape.lift(node) for node in nodes]
    out = np.stack([node.value for node in nodes], axis=axis)
    return tape.record(
        "stack", out, nodes,
        lambda g: [np.take(g, i, axis=axis) for i in range(len(nodes))],
    )


# ---------------------------------------------------------------------------
# Mapas lineales: densa, convolución y convolución transpuesta
# ---------------------------------------------------------------------------

def matmul(a: Operand, b: Operand) -> Node:
    tape = _tape_of(a, b)
    a, b = tape.lift(a), tape.lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul incompatible: {a.shape} @ {b.shape}")
    return tape.record(
        "matmul", a.value @ b.value, (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def dense(x: Node, weight: Node, bias: Optional[Node] = None) -> Node:
    """x (B, in) @ weight (in, out) + bias (out,)."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def _window(offset: Tuple[int, ...], stride: int, extent: Tuple[int, ...]) -> Tuple[slice, ...]:
    """Slices (batch, canal, espaciales) de las posiciones que toca un desplazamiento del kernel."""
    return (slice(None), slice(None)) + tuple(
        slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offset, extent)
    )


def _pad_spatial(array: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return array
    return np.pad(array, [(0, 0), (0, 0)] + [(padding, padding)] * (array.ndim - 2))


def _crop_spatial(array: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return array
    return array[(slice(None), slice(None)) + (slice(padding, -padding),) * (array.ndim - 2)]


def conv(x: Node, weight: Node, bias: Optional[Node] = None, stride: int = 1, padding: int = 0) -> Node:
    """
    Convolución (correlación cruzada) 2D o 3D.

    Args:
        x: (B, C, *S) con S de 2 o 3 dimensiones
        weight: (O, C, *k)
        bias: (O,)
        stride: Paso espacial
        padding: Relleno con ceros a cada lado

    Returns:
        Nodo (B, O, *S_out) con S_out = (S + 2·padding − k) // stride + 1
    """
    tape = x.tape
    batch, channels = x.shape[:2]
    out_channels, weight_channels, *kernel = weight.shape
    if weight_channels != channels or len(kernel) != x.ndim - 2:
        raise ShapeMismatchError(f"conv incompatible: entrada {x.shape}, pesos {weight.shape}")
    padded = _pad_spatial(x.value, padding)
    extent = tuple((s - k) // stride + 1 for s, k in zip(padded.shape[2:], kernel))
    if min(extent) < 1:
        raise ShapeMismatchError(f"conv: entrada {x.shape} menor que el kernel {tuple(kernel)}")
    offsets = list(itertools.product(*(range(k) for k in kernel)))
    positions = int(np.prod(extent))

    # Columnas (B, C·P, M): canal mayor y desplazamiento menor, igual que weight.reshape(O, C·P)
    columns = np.stack([padded[_window(o, stride, extent)] for o in offsets], axis=2)
    columns = columns.reshape(batch, channels * len(offsets), positions)
    kernel_matrix = weight.value.reshape(out_channels, -1)
    out = np.matmul(kernel_matrix, columns).reshape((batch, out_channels) + extent)
    if bias is not None:
        out = out + bias.value.reshape((1, -1) + (1,) * len(extent))

    def vjp(g):
        g_flat = g.reshape(batch, out_channels, positions)
        grad_weight = np.tensordot(g_flat, columns, axes=([0, 2], [0, 2])).reshape(weight.shape)
        grad_columns = np.matmul(kernel_matrix.T, g_flat).reshape((batch, channels, len(offsets)) + extent)
        grad_padded = np.zeros_like(padded)
        for p, o in enumerate(offsets):
            grad_padded[_window(o, stride, extent)] += grad_columns[:, :, p]
        grads = [_crop_spatial(grad_padded, padding), grad_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0,) + tuple(range(2, g.ndim))))
        return grads

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return tape.record("conv", out, parents, vjp)


def conv_transpose(x: Node, weight: Node, bias: Optional[Node] = None, stride: int = 1, padding: int = 0) -> Node:
    """
    Convolución transpuesta 2D o 3D (adjunta de `conv`).

    Args:
        x: (B, C_in, *S)
        weight: (C_in, C_out, *k)
        bias: (C_out,)

    Returns:
        Nodo (B, C_out, *S_out) con S_out = (S − 1)·stride + k − 2·padding
    """
    tape = x.tape
    batch, channels = x.shape[:2]
    weight_channels, out_channels, *kernel = weight.shape
    if weight_channels != channels or len(kernel) != x.ndim - 2:
        raise ShapeMismatchError(f"conv_transpose incompatible: entrada {x.shape}, pesos {weight.shape}")
    extent = x.shape[2:]
    full = tuple((s - 1) * stride + k for s, k in zip(extent, kernel))
    if min(full) <= 2 * padding:
        raise ShapeMismatchError(f"conv_transpose: relleno {padding} excede la salida {full}")
    offsets = list(itertools.product(*(range(k) for k in kernel)))
    positions = int(np.prod(extent))

    inputs = x.value.reshape(batch, channels, positions)
    kernel_matrix = weight.value.reshape(channels, -1)
    columns = np.matmul(kernel_matrix.T, inputs).reshape((batch, out_channels, len(offsets)) + tuple(extent))
    canvas = np.zeros((batch, out_channels) + full, dtype=x.value.dtype)
    for p, o in enumerate(offsets):
        canvas[_window(o, stride, extent)] += columns[:, :, p]
    out = _crop_spatial(canvas, padding)
    if bias is not None:
        out = out + bias.value.reshape((1, -1) + (1,) * len(full))

    def vjp(g):
        grad_canvas = _pad_spatial(g, padding)
        grad_columns = np.stack([grad_canvas[_window(o, stride, extent)] for o in offsets], axis=2)
        grad_columns = grad_columns.reshape(batch, out_channels * len(offsets), positions)
        grad_inputs = np.matmul(kernel_matrix, grad_columns).reshape(x.shape)
        grad_weight = np.tensordot(inputs, grad_columns, axes=([0, 2], [0, 2])).reshape(weight.shape)
        grads = [grad_inputs, grad_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0,) + tuple(range(2, g.ndim))))
        return grads

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return tape.record("conv_transpose", np.ascontiguousarray(out), parents, vjp)


# ---------------------------------------------------------------------------
# Barridos acumulativos
# ---------------------------------------------------------------------------

def cumsum(x: Node, axis: int) -> Node:
    """Sumas prefijas; el adjunto es la suma prefija invertida de los adjuntos."""
    return _unary(
        "cumsum", x, np.cumsum(x.value, axis=axis),
        lambda g: np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),
    )


def exclusive_cumprod(values: np.ndarray, axis: int) -> np.ndarray:
    """Productos prefijos excluyentes: e_k = ∏_{j<k} x_j (e_0 = 1)."""
    moved = np.moveaxis(values, axis, -1)
    shifted = np.concatenate([np.ones_like(moved[..., :1]), moved[..., :-1]], axis=-1)
    return np.moveaxis(np.cumprod(shifted, axis=-1), -1, axis)


def cumprod(x: Node, axis: int) -> Node:
    """
    Productos prefijos out_k = ∏_{j≤k} x_j a lo largo de `axis`.

    El adjunto no divide por x: grad_j = e_j · s_j con e_j el producto prefijo
    excluyente y s_j = g_j + x_{j+1}·s_{j+1} el barrido inverso de adjuntos, así
    que las entradas nulas producen gradientes exactos.
    """
    out = np.cumprod(x.value, axis=axis)

    def vjp(g):
        values = np.moveaxis(x.value, axis, -1)
        adjoint = np.moveaxis(g, axis, -1)
        suffix = np.empty_like(adjoint)
        suffix[..., -1] = adjoint[..., -1]
        for j in range(values.shape[-1] - 2, -1, -1):
            suffix[..., j] = adjoint[..., j] + values[..., j + 1] * suffix[..., j + 1]
        grad = exclusive_cumprod(values, axis=-1) * suffix
        return (np.moveaxis(grad, -1, axis),)

    return x.tape.record("cumprod", out, (x,), vjp)

