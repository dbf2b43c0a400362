"""
Configuración y carga de variables de entorno del toolkit.
"""
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Cargar variables de entorno desde .env
load_dotenv()

logger = logging.getLogger(__name__)

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}

ENV_PREFIX = "PLATONIC_"
# Prefijo anterior, aceptado cuando falta la variable PLATONIC_*
LEGACY_ENV_PREFIX = "VOXREC_"


def _env(name: str, default: str) -> str:
    return os.getenv(ENV_PREFIX + name, os.getenv(LEGACY_ENV_PREFIX + name, default))


def _int_env(name: str, default: str) -> int:
    raw = _env(name, default)
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"⚠️ {ENV_PREFIX}{name}='{raw}' no es un entero, se usa {default}")
        return int(default)


class Settings:
    """Configuración centralizada leída del entorno."""

    # Paralelismo de los kernels numéricos (--threads)
    THREADS: int = _int_env("THREADS", "1")

    # Logging
    LOG_LEVEL: str = _env("LOG_LEVEL", "INFO").upper()

    # Semilla por defecto de todos los subcomandos (--seed)
    DEFAULT_SEED: int = _int_env("DEFAULT_SEED", "0")

    # Directorio por defecto de checkpoints y logs
    OUTPUT_DIR: str = _env("OUTPUT_DIR", "runs")

    # Presets de arquitectura
    ARCHITECTURES_FILE: Path = Path(
        _env("ARCHITECTURES", str(Path(__file__).parent / "architectures.yaml"))
    )

    @classmethod
    def validate(cls) -> list[str]:
        """
        Valida la configuración de entorno.

        Returns:
            Lista de problemas encontrados (vacía si todo está bien)
        """
        problems = []
        if cls.THREADS < 1:
            problems.append(f"PLATONIC_THREADS debe ser >= 1 (actual: {cls.THREADS})")
        if cls.LOG_LEVEL not in _LOG_LEVELS:
            problems.append(f"PLATONIC_LOG_LEVEL desconocido: {cls.LOG_LEVEL}")
        if not cls.ARCHITECTURES_FILE.exists():
            problems.append(f"Archivo de arquitecturas no encontrado: {cls.ARCHITECTURES_FILE}")
        return problems


# Instancia global de configuración
settings = Settings()
