"""
Tests para los costes y el servicio de entrenamiento.
"""
import csv
import math

import numpy as np
import pytest

from src.config import TrainConfig
from src.diffcore import ops
from src.diffcore.tape import Tape
from src.errors import ConfigurationError, ShapeMismatchError, TrainingDivergedError
from src.integrations.dataset_files import load_collection
from src.networks.models import ReconstructionNetworks
from src.render.formation import ImageFormation
from src.render.projections import render
from src.services.synthesis_service import synthesis_service
from src.services.training_service import (
    LAST_CHECKPOINT,
    STEP_LOG_NAME,
    AdversarialObjective,
    TrainingState,
    discriminator_loss,
    generator_loss,
    reconstruction_loss,
    training_service,
)
from src.volume.grid import Image, VoxelGrid
from src.volume.views import CANONICAL_VIEW


def tiny_config(**overrides) -> TrainConfig:
    values = dict(preset="tiny8", batch_size=2, steps=3, checkpoint_every=2, log_every=1, seed=11)
    values.update(overrides)
    return TrainConfig(**values)


def sphere_dataset(shapes: int = 2, views: int = 3, resolution: int = 8, formation=ImageFormation.AO):
    recipes = synthesis_service.sphere_family(shapes, np.random.default_rng(3), colored=formation.is_emission)
    return synthesis_service.synth_dataset(recipes, formation, np.random.default_rng(4), resolution, views)


def logits(tape: Tape, values):
    return tape.constant(np.asarray(values, dtype=np.float64))


def snapshot(networks: ReconstructionNetworks, prefix: str) -> dict:
    return {name: array.copy() for name, array in networks.params.named(prefix).items()}


def assert_params_equal(before: dict, networks: ReconstructionNetworks) -> None:
    for name, array in before.items():
        np.testing.assert_array_equal(networks.params[name], array, err_msg=name)


def assert_params_changed(before: dict, networks: ReconstructionNetworks) -> None:
    assert any(not np.array_equal(networks.params[name], array) for name, array in before.items())


class FrozenDiscriminator(AdversarialObjective):
    """c_Dis constante: Ψ no debe moverse."""

    def discriminator_cost(self, real_logits, fake_logits):
        return real_logits.tape.constant(0.0)


class FrozenGenerator(AdversarialObjective):
    """Objetivo del generador constante: Θ y Φ no deben moverse."""

    def generator_objective(self, c_gen, c_rec):
        return c_gen.tape.constant(0.0)


class AdversarialOnly(AdversarialObjective):
    """Solo c_Gen, sin término de reconstrucción."""

    def generator_objective(self, c_gen, c_rec):
        return c_gen


class ExplodingDiscriminator(AdversarialObjective):
    """c_Dis no finito para forzar un paso divergente."""

    def discriminator_cost(self, real_logits, fake_logits):
        return ops.mul(super().discriminator_cost(real_logits, fake_logits), np.nan)


class TestLosses:
    """Tests de las funciones de coste."""

    def test_self_render_has_zero_reconstruction_loss(self, sphere_grid):
        """c_Rec(R(ω₀, v), v) = 0."""
        image = render(CANONICAL_VIEW, sphere_grid, ImageFormation.AO)
        assert reconstruction_loss(image, sphere_grid, ImageFormation.AO) == 0.0

    def test_full_volume_against_black_image(self):
        """Volumen de unos 2³ contra imagen negra: 4 píxeles con error 1."""
        grid = VoxelGrid(np.ones((1, 2, 2, 2)))
        image = Image(np.zeros((1, 2, 2)))
        assert reconstruction_loss(image, grid, ImageFormation.AO) == pytest.approx(4.0)

    def test_reconstruction_shape_mismatch(self):
        """Una imagen de otra resolución es un error de forma."""
        with pytest.raises(ShapeMismatchError):
            reconstruction_loss(Image(np.zeros((1, 4, 4))), VoxelGrid.zeros(1, 2), ImageFormation.AO)

    def test_discriminator_loss_at_zero_logits(self, tape64):
        """D = 0.5 en ambas ramas: 2 log 0.5."""
        value = float(discriminator_loss(logits(tape64, [0.0, 0.0]), logits(tape64, [0.0, 0.0])).value)
        assert value == pytest.approx(2 * math.log(0.5), abs=1e-12)
        assert value == pytest.approx(-1.386294, abs=1e-6)

    def test_discriminator_loss_saturates_finitely(self, tape64):
        """Con logits extremos el coste es finito y tiende a 0 para un discriminador perfecto."""
        value = float(discriminator_loss(logits(tape64, [1000.0]), logits(tape64, [-1000.0])).value)
        assert math.isfinite(value)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_discriminator_loss_matches_naive_form(self, tape64, rng):
        """Para logits moderados coincide con log σ(r) + log(1 − σ(f))."""
        real, fake = rng.uniform(-4, 4, size=5), rng.uniform(-4, 4, size=5)
        sigmoid = lambda x: 1.0 / (1.0 + np.exp(-x))
        naive = np.mean(np.log(sigmoid(real)) + np.log(1.0 - sigmoid(fake)))
        assert float(discriminator_loss(logits(tape64, real), logits(tape64, fake)).value) == pytest.approx(naive, abs=1e-10)

    def test_generator_loss_values(self, tape64):
        """log(1 − 0.5) y su variante no saturante."""
        assert float(generator_loss(logits(tape64, [0.0])).value) == pytest.approx(-0.693147, abs=1e-6)
        assert float(generator_loss(logits(tape64, [0.0]), non_saturating=True).value) == pytest.approx(0.693147, abs=1e-6)

    def test_generator_loss_decreases_when_fooling(self, tape64):
        """Cuanto más cree D que la vista es real, menor es c_Gen."""
        values = [float(generator_loss(logits(tape64, [x])).value) for x in (-3.0, 0.0, 3.0)]
        assert values[0] > values[1] > values[2]

    def test_generator_loss_matches_naive_form(self, tape64, rng):
        """Para logits moderados coincide con log(1 − σ(f))."""
        fake = rng.uniform(-4, 4, size=5)
        naive = np.mean(np.log(1.0 - 1.0 / (1.0 + np.exp(-fake))))
        assert float(generator_loss(logits(tape64, fake)).value) == pytest.approx(naive, abs=1e-10)

    def test_negative_lambda_rejected(self):
        """λ negativa es un error de configuración."""
        with pytest.raises(ConfigurationError):
            AdversarialObjective(lambda_rec=-1.0)


class TestTrainStep:
    """Tests de un paso de actualización aislado."""

    @pytest.fixture
    def batch(self):
        return sphere_dataset().collection().images[:2]

    def step(self, networks, batch, objective=None, strict=False, config=None):
        config = config or tiny_config()
        state = TrainingState.create(networks, config)
        report = training_service.train_step(batch, np.random.default_rng(9), state, config, objective, strict)
        return state, report

    def test_step_updates_both_groups(self, tiny_networks, batch):
        """Un paso normal mueve Ψ y (Θ, Φ) y reporta costes finitos."""
        state, report = self.step(tiny_networks, batch)
        assert not report.diverged
        assert state.step == 1
        assert all(math.isfinite(v) for v in (report.c_dis, report.c_gen, report.c_rec))
        assert_params_changed(snapshot(tiny_networks, "discriminator."), state.networks)
        assert_params_changed(snapshot(tiny_networks, "generator."), state.networks)
        assert_params_changed(snapshot(tiny_networks, "encoder."), state.networks)

    def test_frozen_discriminator_cost_keeps_psi(self, tiny_networks, batch):
        """c_Dis constante -> Ψ idéntico; (Θ, Φ) siguen cambiando."""
        state, _ = self.step(tiny_networks, batch, FrozenDiscriminator())
        assert_params_equal(snapshot(tiny_networks, "discriminator."), state.networks)
        assert_params_changed(snapshot(tiny_networks, "generator."), state.networks)

    def test_frozen_generator_objective_keeps_theta_phi(self, tiny_networks, batch):
        """Objetivo del generador constante -> Θ y Φ idénticos; Ψ cambia."""
        state, _ = self.step(tiny_networks, batch, FrozenGenerator())
        assert_params_equal(snapshot(tiny_networks, "generator."), state.networks)
        assert_params_equal(snapshot(tiny_networks, "encoder."), state.networks)
        assert_params_changed(snapshot(tiny_networks, "discriminator."), state.networks)

    def test_zero_lambda_is_pure_adversarial_step(self, tiny_networks, batch):
        """Con λ = 0 el paso coincide con uno que solo usa c_Gen."""
        zero_lambda, _ = self.step(tiny_networks, batch, AdversarialObjective(lambda_rec=0.0))
        adversarial, _ = self.step(tiny_networks, batch, AdversarialOnly())
        for name in tiny_networks.params.names:
            np.testing.assert_array_equal(zero_lambda.networks.params[name], adversarial.networks.params[name])

    def test_diverged_step_leaves_parameters(self, tiny_networks, batch):
        """Un paso no finito se marca y no actualiza nada."""
        state, report = self.step(tiny_networks, batch, ExplodingDiscriminator())
        assert report.diverged
        assert state.networks is tiny_networks
        assert state.step == 1

    def test_strict_mode_raises(self, tiny_networks, batch):
        """En modo estricto un paso divergente aborta."""
        with pytest.raises(TrainingDivergedError):
            self.step(tiny_networks, batch, ExplodingDiscriminator(), strict=True)

    def test_empty_batch_rejected(self, tiny_networks):
        """El lote debe tener al menos una imagen."""
        with pytest.raises(ShapeMismatchError):
            self.step(tiny_networks, np.zeros((0, 1, 8, 8), dtype=np.float32))


class TestTrain:
    """Tests del bucle de entrenamiento."""

    def test_zero_steps_writes_initial_checkpoint(self, tmp_path):
        """steps = 0 deja solo el checkpoint inicial, last.pnet y un log con cabecera."""
        result = training_service.train(sphere_dataset().collection(), tiny_config(steps=0), tmp_path)
        assert [p.name for p in result.checkpoints] == ["checkpoint_000000.pnet"]
        assert (tmp_path / LAST_CHECKPOINT).read_bytes() == result.checkpoints[0].read_bytes()
        assert (tmp_path / STEP_LOG_NAME).read_text().splitlines() == [
            "step,c_dis,c_gen,c_rec,grad_norm_discriminator,grad_norm_generator,seconds,diverged"
        ]

    def test_checkpoint_schedule_and_step_log(self, tmp_path):
        """Checkpoints en 0, cada checkpoint_every y al final; una fila de log por paso."""
        result = training_service.train(sphere_dataset().collection(), tiny_config(), tmp_path)
        assert [p.name for p in result.checkpoints] == [
            "checkpoint_000000.pnet", "checkpoint_000002.pnet", "checkpoint_000003.pnet"
        ]
        with open(result.step_log, newline="") as file:
            rows = list(csv.DictReader(file))
        assert [int(row["step"]) for row in rows] == [0, 1, 2]
        assert len(result.reports) == 3

    def test_same_seed_same_checkpoint_bytes(self, tmp_path):
        """Misma semilla, mismos datos y un hilo -> checkpoints idénticos byte a byte."""
        collection = sphere_dataset().collection()
        training_service.train(collection, tiny_config(), tmp_path / "a")
        training_service.train(collection, tiny_config(), tmp_path / "b")
        assert (tmp_path / "a" / LAST_CHECKPOINT).read_bytes() == (tmp_path / "b" / LAST_CHECKPOINT).read_bytes()

    def test_different_seed_different_checkpoint(self, tmp_path):
        """Otra semilla produce otros parámetros."""
        collection = sphere_dataset().collection()
        training_service.train(collection, tiny_config(seed=1), tmp_path / "a")
        training_service.train(collection, tiny_config(seed=2), tmp_path / "b")
        assert (tmp_path / "a" / LAST_CHECKPOINT).read_bytes() != (tmp_path / "b" / LAST_CHECKPOINT).read_bytes()

    def test_channel_mismatch(self, tmp_path):
        """Imágenes de 1 canal no sirven para EA."""
        with pytest.raises(ConfigurationError):
            training_service.train(sphere_dataset().collection(), tiny_config(formation="ea-paper"), tmp_path)

    def test_resolution_mismatch(self, tmp_path):
        """Imágenes de 8 px con un preset de 32 px."""
        with pytest.raises(ConfigurationError):
            training_service.train(sphere_dataset().collection(), TrainConfig(preset="desk32", steps=1), tmp_path)

    def test_holdout_requires_provenance(self, tmp_path):
        """Reservar formas exige saber a qué receta pertenece cada imagen."""
        with pytest.raises(ConfigurationError):
            training_service.train(sphere_dataset().collection(), tiny_config(holdout_shapes=1), tmp_path)

    def test_holdout_evaluation(self, tmp_path):
        """Las imágenes de la última receta se reservan y se evalúan."""
        dataset = sphere_dataset(shapes=2, views=3)
        synthesis_service.write_dataset(dataset, tmp_path / "data")
        collection = load_collection(tmp_path / "data", 8, 1)
        result = training_service.train(
            collection, tiny_config(steps=1, holdout_shapes=1, eval_views_per_shape=2), tmp_path / "run"
        )
        assert result.holdout_indices == [3, 4, 5]
        assert result.evaluation is not None
        assert result.evaluation.count == 2

    def test_default_holdout_reserves_one_shape(self, tmp_path):
        """Sin holdout_shapes, un dataset con procedencia reserva su última receta."""
        dataset = sphere_dataset(shapes=2, views=3)
        synthesis_service.write_dataset(dataset, tmp_path / "data")
        collection = load_collection(tmp_path / "data", 8, 1)
        result = training_service.train(collection, tiny_config(steps=1, eval_views_per_shape=1), tmp_path / "run")
        assert result.holdout_indices == [3, 4, 5]
        assert result.evaluation is not None
        assert result.evaluation.count == 1

    def test_default_holdout_without_provenance_trains_everything(self, tmp_path):
        """Sin procedencia no se reserva nada ni se evalúa."""
        result = training_service.train(sphere_dataset().collection(), tiny_config(steps=1), tmp_path)
        assert result.holdout_indices == []
        assert result.evaluation is None

    def test_holdout_zero_disables_evaluation(self, tmp_path):
        """holdout_shapes=0 entrena con todas las imágenes aunque haya procedencia."""
        dataset = sphere_dataset(shapes=2, views=3)
        synthesis_service.write_dataset(dataset, tmp_path / "data")
        collection = load_collection(tmp_path / "data", 8, 1)
        result = training_service.train(collection, tiny_config(steps=1, holdout_shapes=0), tmp_path / "run")
        assert result.holdout_indices == []
        assert result.evaluation is None

    def test_holdout_cannot_take_every_shape(self, tmp_path):
        """No se pueden reservar todas las recetas."""
        dataset = sphere_dataset(shapes=2, views=2)
        synthesis_service.write_dataset(dataset, tmp_path / "data")
        collection = load_collection(tmp_path / "data", 8, 1)
        with pytest.raises(ConfigurationError):
            training_service.train(collection, tiny_config(holdout_shapes=2), tmp_path / "run")

    def test_reconstruct_returns_grid(self, tiny_networks):
        """Reconstrucción de una imagen: VoxelGrid n_c × n³ en [0,1]."""
        grid = training_service.reconstruct(np.zeros((1, 8, 8), dtype=np.float32), tiny_networks)
        assert grid.values.shape == (1, 8, 8, 8)
        assert grid.values.min() >= 0.0 and grid.values.max() <= 1.0


@pytest.mark.slow
class TestSmoke:
    """Ejecuciones de escritorio (minutos)."""

    def test_overfit_single_sphere(self, tmp_path, centered_sphere):
        """200 pasos sobre una esfera a n_p = 32: c_Rec cae por debajo de la mitad."""
        dataset = synthesis_service.synth_dataset([centered_sphere], ImageFormation.AO, np.random.default_rng(0), 32, 1)
        config = TrainConfig(preset="desk32", steps=200, batch_size=1, checkpoint_every=200, seed=0)
        result = training_service.train(dataset.collection(), config, tmp_path)
        assert result.reports[-1].c_rec < 0.5 * result.reports[0].c_rec

    def test_sphere_family_holdout_iou(self, tmp_path):
        """20 esferas × 50 vistas, 2000 pasos con lotes de 2: IoU reservada ≥ 0.4."""
        recipes = synthesis_service.sphere_family(20, np.random.default_rng(0))
        dataset = synthesis_service.synth_dataset(recipes, ImageFormation.AO, np.random.default_rng(1), 32)
        synthesis_service.write_dataset(dataset, tmp_path / "data")
        collection = load_collection(tmp_path / "data", 32, 1)
        config = TrainConfig(preset="desk32", steps=2000, batch_size=2, checkpoint_every=2000, holdout_shapes=2, seed=0)
        result = training_service.train(collection, config, tmp_path / "run")
        assert result.reports[-1].c_rec <= 0.5 * result.reports[0].c_rec
        assert result.evaluation.iou >= 0.4
