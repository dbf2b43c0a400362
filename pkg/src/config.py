"""
Modelos de configuración (pydantic) y lectura de archivos key=value.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from src.errors import ConfigurationError, DataIOError
from src.render.formation import ImageFormation

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def load_presets(path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """Carga los presets de arquitectura del YAML (con caché por ruta)."""
    presets_path = Path(path) if path else settings.ARCHITECTURES_FILE
    try:
        with open(presets_path, "r", encoding="utf-8") as file:
            presets = yaml.safe_load(file) or {}
    except OSError as e:
        raise DataIOError(presets_path, f"no se pudo leer el archivo de presets: {e}")
    logger.debug(f"📋 Presets de arquitectura cargados: {sorted(presets)}")
    return presets


class ArchitectureConfig(BaseModel):
    """Anchos y resolución de encoder, generador y discriminador."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    resolution: int = Field(..., gt=0)
    z_dim: int = Field(128, gt=0)
    encoder_channels: Tuple[int, ...]
    generator_channels: Tuple[int, ...]
    leaky_slope: float = Field(0.2, ge=0.0)
    init_std: float = Field(0.02, gt=0.0)

    @model_validator(mode="after")
    def _check_stages(self) -> "ArchitectureConfig":
        for label, channels in (("encoder", self.encoder_channels), ("generator", self.generator_channels)):
            if not channels:
                raise ValueError(f"{label}_channels no puede estar vacío")
            stride = 2 ** len(channels)
            if self.resolution % stride != 0:
                raise ValueError(
                    f"resolución {self.resolution} no divisible por 2^{len(channels)} ({label})"
                )
        return self

    @property
    def encoder_output_resolution(self) -> int:
        return self.resolution // 2 ** len(self.encoder_channels)

    @property
    def generator_base_resolution(self) -> int:
        return self.resolution // 2 ** len(self.generator_channels)

    @classmethod
    def from_preset(cls, name: str, presets_path: Optional[str] = None, **overrides: Any) -> "ArchitectureConfig":
        presets = load_presets(presets_path)
        if name not in presets:
            raise ConfigurationError(f"Preset de arquitectura desconocido: '{name}' (disponibles: {sorted(presets)})")
        values = dict(presets[name])
        values.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigurationError(f"Preset '{name}' inválido: {e}")

    @classmethod
    def from_params(cls, shapes: Mapping[str, Sequence[int]]) -> Tuple["ArchitectureConfig", int, int]:
        """
        Infiere la arquitectura a partir de las formas de los parámetros de un checkpoint.

        Args:
            shapes: Nombre de parámetro -> dims

        Returns:
            Tupla (arquitectura, canales del volumen, canales de la imagen)
        """
        def stages(prefix: str) -> list:
            found = []
            while f"{prefix}{len(found)}.weight" in shapes:
                found.append(tuple(shapes[f"{prefix}{len(found)}.weight"]))
            return found

        encoder = stages("encoder.conv")
        deconvs = stages("generator.deconv")
        if not encoder or not deconvs or "encoder.dense.weight" not in shapes:
            raise ConfigurationError("El checkpoint no contiene un encoder y un generador completos")
        dense_in, z_dim = shapes["encoder.dense.weight"]
        spatial = round((dense_in // encoder[-1][0]) ** 0.5)
        try:
            architecture = cls(
                resolution=spatial * 2 ** len(encoder),
                z_dim=z_dim,
                encoder_channels=tuple(weight[0] for weight in encoder),
                generator_channels=tuple(weight[0] for weight in deconvs),
            )
        except ValidationError as e:
            raise ConfigurationError(f"Formas de parámetros incoherentes: {e}")
        return architecture, deconvs[-1][1], encoder[0][1]


class TrainConfig(BaseModel):
    """Hiperparámetros del entrenamiento (los fijados por el método y los de escritorio)."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    formation: ImageFormation = ImageFormation.AO
    lambda_rec: float = Field(100.0, ge=0.0, description="peso de la reconstrucción")
    preset: str = "desk32"
    resolution: Optional[int] = Field(None, gt=0, description="n_p; debe coincidir con el preset")
    z_dim: Optional[int] = Field(None, gt=0)
    batch_size: int = Field(4, ge=1)
    steps: int = Field(2000, ge=0)
    learning_rate: float = Field(2e-4, gt=0.0)
    beta1: float = Field(0.5, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    seed: int = 0
    checkpoint_every: int = Field(500, ge=1)
    log_every: int = Field(50, ge=1)
    non_saturating: bool = False
    log_domain: bool = False
    views_per_shape: int = Field(50, ge=1, description="vistas por forma en synth")
    holdout_shapes: Optional[int] = Field(None, ge=0, description="None reserva una forma si el dataset tiene procedencia")
    eval_views_per_shape: int = Field(2, ge=1)
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    chamfer_epsilon: float = Field(1e-3, gt=0.0)
    dtype: Literal["float32", "float64"] = "float32"
    dataset: Optional[str] = None
    output_dir: str = settings.OUTPUT_DIR

    @field_validator("formation", mode="before")
    @classmethod
    def _parse_formation(cls, value: Any) -> Any:
        if isinstance(value, str):
            return ImageFormation.parse(value)
        return value

    @model_validator(mode="after")
    def _check_resolution(self) -> "TrainConfig":
        preset_resolution = load_presets().get(self.preset, {}).get("resolution")
        if preset_resolution is None:
            raise ValueError(f"preset desconocido: {self.preset}")
        if self.resolution is not None and self.resolution != preset_resolution:
            raise ValueError(
                f"resolution={self.resolution} no coincide con el preset '{self.preset}' ({preset_resolution})"
            )
        return self

    @property
    def n_p(self) -> int:
        return self.resolution or load_presets()[self.preset]["resolution"]

    def architecture(self) -> ArchitectureConfig:
        return ArchitectureConfig.from_preset(self.preset, z_dim=self.z_dim)


class CliConfig(TrainConfig):
    """Configuración de la CLI: TrainConfig más rutas y paralelismo."""

    seed: int = settings.DEFAULT_SEED
    threads: int = Field(settings.THREADS, ge=1)
    log_level: str = settings.LOG_LEVEL


def parse_key_value_file(path) -> Dict[str, str]:
    """
    Lee un archivo de configuración `key = value`.

    Las líneas vacías y los comentarios `#` se ignoran; una clave repetida es un error.
    """
    entries: Dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataIOError(path, f"no se pudo leer la configuración: {e}")
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: se esperaba 'key = value', encontrado '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{path}:{number}: clave vacía")
        if key in entries:
            raise ConfigurationError(f"{path}:{number}: clave repetida '{key}'")
        entries[key] = value
    return entries


def build_config(model: type, file_values: Optional[Dict[str, Any]] = None, overrides: Optional[Dict[str, Any]] = None):
    """
    Fusiona valores de archivo y overrides de la línea de comandos y valida contra el esquema.

    Las claves desconocidas son errores, no advertencias.
    """
    values: Dict[str, Any] = dict(file_values or {})
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    unknown = sorted(set(values) - set(model.model_fields))
    if unknown:
        raise ConfigurationError(f"Claves de configuración desconocidas: {', '.join(unknown)}")
    try:
        return model(**values)
    except ValidationError as e:
        raise ConfigurationError(f"Configuración inválida: {e}")
