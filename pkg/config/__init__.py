"""
Configuración de entorno del toolkit: variables PLATONIC_* (con VOXREC_* como respaldo).
"""
from .settings import ENV_PREFIX, LEGACY_ENV_PREFIX, settings, Settings

__all__ = ["settings", "Settings", "ENV_PREFIX", "LEGACY_ENV_PREFIX"]
