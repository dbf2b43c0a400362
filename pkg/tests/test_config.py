"""
Tests para los modelos de configuración y el archivo key=value.
"""
import importlib.util
import sys

import pytest
from pydantic import ValidationError

from config import ENV_PREFIX, LEGACY_ENV_PREFIX, settings
from src.config import ArchitectureConfig, CliConfig, TrainConfig, build_config, parse_key_value_file
from src.errors import ConfigurationError, DataIOError
from src.render.formation import ImageFormation


def load_fresh_settings():
    """Ejecuta de nuevo config/settings.py sin tocar el módulo ya importado."""
    path = sys.modules["config.settings"].__file__
    spec = importlib.util.spec_from_file_location("settings_from_environment", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module.settings


class TestArchitectureConfig:
    """Tests de los presets de arquitectura."""

    @pytest.mark.parametrize("preset, resolution", [("paper64", 64), ("desk32", 32), ("tiny8", 8)])
    def test_presets(self, preset, resolution):
        """Los tres presets cargan y sus etapas reducen la resolución a un entero."""
        architecture = ArchitectureConfig.from_preset(preset)
        assert architecture.resolution == resolution
        assert architecture.encoder_output_resolution * 2 ** len(architecture.encoder_channels) == resolution
        assert architecture.generator_base_resolution * 2 ** len(architecture.generator_channels) == resolution

    def test_reference_widths(self):
        """El preset de 64 px usa 64-128-256-512 y z de 128."""
        architecture = ArchitectureConfig.from_preset("paper64")
        assert architecture.encoder_channels == (64, 128, 256, 512)
        assert architecture.z_dim == 128

    def test_override(self):
        """Los overrides no nulos sustituyen valores del preset."""
        assert ArchitectureConfig.from_preset("desk32", z_dim=16).z_dim == 16
        assert ArchitectureConfig.from_preset("desk32", z_dim=None).z_dim == 128

    def test_unknown_preset(self):
        """Un preset inexistente es un error de configuración."""
        with pytest.raises(ConfigurationError):
            ArchitectureConfig.from_preset("huge1024")

    def test_indivisible_resolution(self):
        """La resolución debe ser divisible por 2^etapas."""
        with pytest.raises(ValidationError):
            ArchitectureConfig(resolution=12, encoder_channels=(4, 8, 16), generator_channels=(8,))

    def test_frozen(self):
        """La arquitectura es inmutable."""
        architecture = ArchitectureConfig.from_preset("tiny8")
        with pytest.raises(ValidationError):
            architecture.z_dim = 3


class TestTrainConfig:
    """Tests de TrainConfig."""

    def test_defaults(self):
        """λ = 100, Adam 2e-4 / (0.5, 0.999) y AO por defecto."""
        config = TrainConfig()
        assert config.lambda_rec == 100.0
        assert (config.learning_rate, config.beta1, config.beta2) == (2e-4, 0.5, 0.999)
        assert config.formation is ImageFormation.AO
        assert config.n_p == 32
        assert config.views_per_shape == 50

    def test_formation_from_string(self):
        """La formación acepta los nombres de la CLI."""
        assert TrainConfig(formation="ea_composite").formation is ImageFormation.EA_COMPOSITE

    def test_resolution_must_match_preset(self):
        """Una resolución distinta de la del preset se rechaza."""
        assert TrainConfig(preset="tiny8", resolution=8).n_p == 8
        with pytest.raises(ValidationError):
            TrainConfig(preset="tiny8", resolution=16)

    def test_unknown_preset(self):
        """El preset se valida al construir."""
        with pytest.raises(ValidationError):
            TrainConfig(preset="missing")

    @pytest.mark.parametrize("field, value", [("lambda_rec", -1.0), ("batch_size", 0), ("threshold", 1.0)])
    def test_invalid_values(self, field, value):
        """Valores fuera de rango se rechazan."""
        with pytest.raises(ValidationError):
            TrainConfig(**{field: value})

    def test_architecture_applies_z_dim(self):
        """z_dim de la configuración sustituye al del preset."""
        assert TrainConfig(preset="tiny8", z_dim=3).architecture().z_dim == 3


class TestKeyValueFile:
    """Tests de parse_key_value_file y build_config."""

    def test_parse(self, tmp_path):
        """Comentarios y líneas vacías se ignoran; los espacios se recortan."""
        path = tmp_path / "train.cfg"
        path.write_text("# entrenamiento\n\nsteps = 10  # pocos\nformation=vh\n", encoding="utf-8")
        assert parse_key_value_file(path) == {"steps": "10", "formation": "vh"}

    @pytest.mark.parametrize("content", ["steps 10\n", " = 3\n", "steps = 1\nsteps = 2\n"])
    def test_malformed(self, tmp_path, content):
        """Sin '=', clave vacía o clave repetida."""
        path = tmp_path / "bad.cfg"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(ConfigurationError):
            parse_key_value_file(path)

    def test_missing_file(self, tmp_path):
        """Un archivo inexistente es un error de E/S."""
        with pytest.raises(DataIOError):
            parse_key_value_file(tmp_path / "missing.cfg")

    def test_overrides_win(self):
        """Los flags de la línea de comandos pisan al archivo; los None no."""
        config = build_config(TrainConfig, {"steps": "10", "preset": "tiny8"}, {"steps": 3, "seed": None})
        assert config.steps == 3
        assert config.seed == 0
        assert config.preset == "tiny8"

    def test_unknown_keys(self):
        """Las claves desconocidas son errores."""
        with pytest.raises(ConfigurationError, match="desconocidas"):
            build_config(TrainConfig, {"stepz": "10"})

    def test_invalid_value_becomes_configuration_error(self):
        """Los errores de validación se traducen a ConfigurationError."""
        with pytest.raises(ConfigurationError):
            build_config(TrainConfig, {"batch_size": "0"})

    def test_cli_config_extends_train_config(self):
        """CliConfig añade hilos y nivel de log."""
        config = build_config(CliConfig, {"threads": "2"})
        assert config.threads == 2
        assert config.log_level == settings.LOG_LEVEL


class TestSettings:
    """Tests de la configuración de entorno."""

    def test_defaults_are_valid(self):
        """La configuración por defecto no tiene problemas."""
        assert settings.THREADS >= 1
        assert settings.ARCHITECTURES_FILE.exists()

    def test_environment_overrides(self, monkeypatch):
        """PLATONIC_THREADS y compañía fijan los valores por defecto."""
        monkeypatch.setenv("PLATONIC_THREADS", "4")
        monkeypatch.setenv("PLATONIC_LOG_LEVEL", "debug")
        monkeypatch.setenv("PLATONIC_DEFAULT_SEED", "9")
        monkeypatch.setenv("PLATONIC_OUTPUT_DIR", "otros")
        fresh = load_fresh_settings()
        assert fresh.THREADS == 4
        assert fresh.LOG_LEVEL == "DEBUG"
        assert fresh.DEFAULT_SEED == 9
        assert fresh.OUTPUT_DIR == "otros"

    def test_legacy_prefix_is_a_fallback(self, monkeypatch):
        """VOXREC_* solo se usa cuando falta la variable PLATONIC_*."""
        assert (ENV_PREFIX, LEGACY_ENV_PREFIX) == ("PLATONIC_", "VOXREC_")
        monkeypatch.delenv(f"{ENV_PREFIX}THREADS", raising=False)
        monkeypatch.setenv(f"{LEGACY_ENV_PREFIX}THREADS", "3")
        assert load_fresh_settings().THREADS == 3
        monkeypatch.setenv(f"{ENV_PREFIX}THREADS", "5")
        assert load_fresh_settings().THREADS == 5

    def test_invalid_integer_falls_back(self, monkeypatch):
        """Un entero ilegible usa el valor por defecto."""
        monkeypatch.setenv("PLATONIC_THREADS", "muchos")
        assert load_fresh_settings().THREADS == 1
