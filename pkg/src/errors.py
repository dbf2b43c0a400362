"""
Excepciones del toolkit.

Todas heredan de VoxrecError para que la CLI pueda distinguir errores de entrada
validados (código de salida 1) de fallos internos (código 2).
"""


class VoxrecError(Exception):
    """Excepción base para errores validados del toolkit."""
    pass


class ShapeMismatchError(VoxrecError):
    """Dimensiones, canales o resolución incompatibles con el contrato de la operación."""
    pass


class FormationError(ShapeMismatchError):
    """Modo de formación de imagen incompatible con los canales del volumen."""
    pass


class RangeViolationError(VoxrecError):
    """Valores fuera del rango permitido (p. ej. voxels fuera de [0,1])."""
    pass


class DataIOError(VoxrecError):
    """Archivo ilegible, corrupto o truncado."""

    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class VolumeFormatError(VoxrecError):
    """Cabecera PVOX inválida (magic o versión)."""
    pass


class CheckpointFormatError(VoxrecError):
    """Cabecera o manifiesto PNET inválido."""
    pass


class ImageFormatError(VoxrecError):
    """Modo de imagen o profundidad de bits no soportados."""
    pass


class ShapeRecipeError(VoxrecError):
    """Receta sintética fuera de la esfera inscrita del cubo."""
    pass


class ConfigurationError(VoxrecError):
    """Claves desconocidas, valores inválidos o dataset incompatible con la configuración."""
    pass


class TrainingDivergedError(VoxrecError):
    """Paso de entrenamiento con pérdidas o gradientes no finitos (solo en modo estricto)."""
    pass
