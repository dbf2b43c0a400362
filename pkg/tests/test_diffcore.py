"""
Tests para la cinta de diferenciación automática, sus primitivas y el optimizador.
"""
import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from src.diffcore import ops
from src.diffcore.optim import Adam
from src.diffcore.tape import Tape
from src.errors import ShapeMismatchError
from src.render.formation import ImageFormation
from src.render.projections import render_batch
from src.volume.views import sample_view


def explicit_cumprod_jacobian(x: np.ndarray) -> np.ndarray:
    """J[k, j] = ∂(∏_{i≤k} x_i)/∂x_j construido término a término."""
    n = len(x)
    jacobian = np.zeros((n, n))
    for k in range(n):
        for j in range(k + 1):
            product = 1.0
            for i in range(k + 1):
                if i != j:
                    product *= x[i]
            jacobian[k, j] = product
    return jacobian


class TestCumulativeScans:
    """Tests de los barridos acumulativos."""

    @pytest.mark.parametrize("values, expected", [
        ([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]),
        ([0.5, 0.5], [0.5, 0.25]),
    ])
    def test_cumprod_forward(self, tape64, values, expected):
        """Productos prefijos de ejemplos directos."""
        out = ops.cumprod(tape64.variable(values), axis=0)
        np.testing.assert_allclose(out.value, expected, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("values", [
        [0.2, 0.0, 0.7],
        [0.3, 0.0, 0.5, 0.0, 0.9],
        [0.0, 0.0, 0.0],
        [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2],
    ])
    def test_cumprod_backward_matches_explicit_jacobian(self, tape64, rng, values):
        """El adjunto coincide con gᵀJ del Jacobiano explícito, también con ceros en la entrada."""
        x = tape64.variable(values)
        out = ops.cumprod(x, axis=0)
        weights = rng.standard_normal(len(values))
        grads = tape64.backward(ops.sum(ops.mul(out, weights)), wrt=[x])

        expected = weights @ explicit_cumprod_jacobian(np.asarray(values))
        np.testing.assert_allclose(grads[x], expected, rtol=0, atol=1e-12)

    def test_cumprod_sum_gradient_with_zero(self, tape64):
        """Gradiente de sum(cumprod([0.2, 0, 0.7])): finito y exacto."""
        x = tape64.variable([0.2, 0.0, 0.7])
        grads = tape64.backward(ops.sum(ops.cumprod(x, axis=0)), wrt=[x])
        expected = explicit_cumprod_jacobian(np.array([0.2, 0.0, 0.7])).sum(axis=0)
        np.testing.assert_allclose(grads[x], expected, rtol=0, atol=1e-12)
        assert np.all(np.isfinite(grads[x]))

    def test_cumprod_along_inner_axis(self, tape64, rng):
        """El barrido respeta el eje pedido en arrays multidimensionales."""
        values = rng.uniform(0.1, 0.9, size=(3, 5, 2))
        x = tape64.variable(values)
        out = ops.cumprod(x, axis=1)
        np.testing.assert_allclose(out.value, np.cumprod(values, axis=1))

        weights = rng.standard_normal(values.shape)
        grads = tape64.backward(ops.sum(ops.mul(out, weights)), wrt=[x])
        for a in range(3):
            for c in range(2):
                expected = weights[a, :, c] @ explicit_cumprod_jacobian(values[a, :, c])
                np.testing.assert_allclose(grads[x][a, :, c], expected, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("values, expected", [
        ([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        ([1.0, 2.0, 3.0], [1.0, 3.0, 6.0]),
    ])
    def test_cumsum_forward(self, tape64, values, expected):
        """Sumas prefijas de ejemplos directos."""
        out = ops.cumsum(tape64.variable(values), axis=0)
        np.testing.assert_array_equal(out.value, expected)

    def test_cumsum_backward_of_ones(self, tape64):
        """El adjunto de unos sobre 4 entradas es [4, 3, 2, 1]."""
        x = tape64.variable(np.zeros(4))
        grads = tape64.backward(ops.sum(ops.cumsum(x, axis=0)), wrt=[x])
        np.testing.assert_array_equal(grads[x], [4.0, 3.0, 2.0, 1.0])


class TestBackward:
    """Tests de Tape.backward."""

    def test_identity_loss(self, tape64):
        """loss = x escalar tiene gradiente 1."""
        x = tape64.variable(3.0)
        grads = tape64.backward(x)
        assert float(grads[x]) == 1.0

    def test_sum_of_squares(self, tape64):
        """loss = sum(x ⊙ x) con x = [1, 2] tiene gradiente [2, 4]."""
        x = tape64.variable([1.0, 2.0])
        grads = tape64.backward(ops.sum(x * x))
        np.testing.assert_array_equal(grads[x], [2.0, 4.0])

    def test_non_scalar_loss_rejected(self, tape64):
        """Una pérdida no escalar es un error de contrato."""
        x = tape64.variable([1.0, 2.0])
        with pytest.raises(ShapeMismatchError, match="escalar"):
            tape64.backward(x * 2.0)

    def test_unreached_node_gets_zeros(self, tape64):
        """Un nodo sin camino hasta la pérdida recibe ceros de su forma."""
        x = tape64.variable([1.0, 2.0])
        unused = tape64.variable(np.ones((2, 3)))
        grads = tape64.backward(ops.sum(x), wrt=[x, unused])
        np.testing.assert_array_equal(grads[unused], np.zeros((2, 3)))
        assert grads.adjoint(unused) is None

    def test_every_reached_node_has_matching_adjoint(self, tape64, rng):
        """Tras backward cada nodo alcanzado tiene un adjunto de sus mismas dims."""
        x = tape64.variable(rng.standard_normal((2, 3)))
        y = ops.sigmoid(ops.matmul(x, tape64.constant(rng.standard_normal((3, 4)))))
        loss = ops.mean(ops.square(y))
        grads = tape64.backward(loss, wrt=[x])
        for node in (x, y):
            assert grads.adjoint(node).shape == node.shape

    def test_broadcast_gradients_are_reduced(self, tape64):
        """El adjunto de un operando difundido se suma sobre los ejes expandidos."""
        a = tape64.variable(np.ones((2, 3)))
        b = tape64.variable(np.array([1.0, 2.0, 3.0]))
        grads = tape64.backward(ops.sum(a * b))
        np.testing.assert_array_equal(grads[b], [2.0, 2.0, 2.0])
        np.testing.assert_array_equal(grads[a], [[1.0, 2.0, 3.0]] * 2)

    def test_getitem_accumulates_repeated_indices(self, tape64):
        """Los índices repetidos acumulan su adjunto."""
        x = tape64.variable([1.0, 2.0, 3.0])
        grads = tape64.backward(ops.sum(ops.getitem(x, np.array([0, 0, 2]))))
        np.testing.assert_array_equal(grads[x], [2.0, 0.0, 1.0])

    def test_mixing_tapes_rejected(self, tape64):
        """No se pueden combinar nodos de cintas distintas."""
        other = Tape(np.float64)
        with pytest.raises(ValueError):
            ops.add(tape64.variable(1.0), other.variable(1.0))

    def test_log_sigmoid_is_stable(self, tape64):
        """log_sigmoid es finito para logits extremos."""
        x = tape64.variable([-1000.0, 0.0, 1000.0])
        out = ops.log_sigmoid(x)
        np.testing.assert_allclose(out.value, [-1000.0, np.log(0.5), 0.0], atol=1e-12)
        grads = tape64.backward(ops.sum(out))
        np.testing.assert_allclose(grads[x], [1.0, 0.5, 0.0], atol=1e-12)


class TestConvolutions:
    """Tests de las convoluciones y su adjunta."""

    def test_conv_matches_direct_loop(self, tape64, rng):
        """conv 2D con paso 2 y relleno 1 frente a un bucle directo."""
        x = rng.standard_normal((1, 2, 6, 6))
        w = rng.standard_normal((3, 2, 4, 4))
        b = rng.standard_normal(3)
        out = ops.conv(tape64.constant(x), tape64.constant(w), tape64.constant(b), stride=2, padding=1).value

        padded = np.pad(x, [(0, 0), (0, 0), (1, 1), (1, 1)])
        expected = np.zeros((1, 3, 3, 3))
        for o in range(3):
            for i in range(3):
                for j in range(3):
                    patch = padded[0, :, 2 * i:2 * i + 4, 2 * j:2 * j + 4]
                    expected[0, o, i, j] = np.sum(patch * w[o]) + b[o]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    @pytest.mark.parametrize("spatial", [(8, 8), (4, 4, 4)])
    def test_conv_transpose_is_adjoint_of_conv(self, tape64, rng, spatial):
        """⟨conv(x, w), y⟩ = ⟨x, conv_transpose(y, w)⟩."""
        x = rng.standard_normal((2, 3) + spatial)
        w = rng.standard_normal((5, 3) + (4,) * len(spatial))
        forward = ops.conv(tape64.constant(x), tape64.constant(w), stride=2, padding=1).value
        y = rng.standard_normal(forward.shape)
        backward = ops.conv_transpose(tape64.constant(y), tape64.constant(w), stride=2, padding=1).value

        assert backward.shape == x.shape
        assert np.sum(forward * y) == pytest.approx(np.sum(x * backward), rel=1e-12)

    def test_conv_shape_mismatch(self, tape64):
        """Canales de entrada distintos a los de los pesos."""
        with pytest.raises(ShapeMismatchError):
            ops.conv(tape64.constant(np.zeros((1, 2, 4, 4))), tape64.constant(np.zeros((3, 1, 4, 4))))


class TestAdam:
    """Tests del optimizador."""

    def test_first_step_moves_by_learning_rate(self):
        """El primer paso desplaza cada parámetro lr en contra del signo del gradiente."""
        adam = Adam(learning_rate=1e-2)
        updated = adam.step({"w": np.zeros(3)}, {"w": np.array([1.0, -2.0, 0.5])})
        np.testing.assert_allclose(updated["w"], [-1e-2, 1e-2, -1e-2], rtol=1e-6)

    def test_maximize_ascends(self):
        """Con maximize el paso sigue al gradiente."""
        adam = Adam(learning_rate=1e-2)
        updated = adam.step({"w": np.zeros(2)}, {"w": np.array([3.0, -1.0])}, maximize=True)
        np.testing.assert_allclose(updated["w"], [1e-2, -1e-2], rtol=1e-6)

    def test_zero_gradient_leaves_parameters(self):
        """Un gradiente nulo no mueve el parámetro, y los ausentes se conservan."""
        adam = Adam()
        params = {"a": np.ones(2, dtype=np.float32), "b": np.full(2, 5.0, dtype=np.float32)}
        updated = adam.step(params, {"a": np.zeros(2, dtype=np.float32)})
        np.testing.assert_array_equal(updated["a"], params["a"])
        assert updated["b"] is params["b"]
        assert updated["a"].dtype == np.float32


class TestReplay:
    """Tests de la reproducibilidad de la cinta."""

    def test_identical_inputs_give_identical_forward_values(self, tiny_networks):
        """Dos cintas con las mismas entradas y un hilo registran valores idénticos bit a bit."""
        images = np.random.default_rng(3).uniform(size=(2, 1, 8, 8)).astype(np.float32)
        views = [sample_view(np.random.default_rng(4)) for _ in range(2)]

        def replay():
            tape = Tape(np.float32)
            bound = tiny_networks.params.bind(tape)
            volumes = tiny_networks.generate(tiny_networks.encode(tape.constant(images), bound), bound)
            _, logits = tiny_networks.discriminate(render_batch(views, volumes, ImageFormation.AO), bound)
            loss = ops.mean(logits)
            grads = tape.backward(loss)
            return [node.value for node in tape.nodes], [grads[node] for node in bound.values()]

        with threadpool_limits(limits=1):
            first_values, first_grads = replay()
            second_values, second_grads = replay()
        assert len(first_values) == len(second_values)
        for a, b in zip(first_values + first_grads, second_values + second_grads):
            np.testing.assert_array_equal(a, b)
