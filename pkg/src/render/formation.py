"""
Modelos de formación de imagen.
"""
from enum import Enum

from src.errors import ConfigurationError, FormationError


class ImageFormation(str, Enum):
    """Modos de proyección; el valor es el nombre usado en la CLI y en la configuración."""
    VH = "vh"
    AO = "ao"
    EA_PAPER = "ea-paper"
    EA_COMPOSITE = "ea-composite"

    @classmethod
    def parse(cls, value: str) -> "ImageFormation":
        normalized = value.strip().lower().replace("_", "-")
        for formation in cls:
            if formation.value == normalized:
                return formation
        choices = ", ".join(f.value for f in cls)
        raise ConfigurationError(f"Formación de imagen desconocida: '{value}' (opciones: {choices})")

    @property
    def is_emission(self) -> bool:
        return self in (ImageFormation.EA_PAPER, ImageFormation.EA_COMPOSITE)

    @property
    def volume_channels(self) -> int:
        return 4 if self.is_emission else 1

    @property
    def image_channels(self) -> int:
        return 3 if self.is_emission else 1

    def check_volume(self, channels: int) -> None:
        """Lanza FormationError si el volumen no tiene los canales que exige el modo."""
        if channels != self.volume_channels:
            raise FormationError(
                f"La formación '{self.value}' requiere {self.volume_channels} canal(es) de volumen, recibió {channels}"
            )

    @classmethod
    def compatible_with(cls, channels: int) -> list:
        """Modos aplicables a un volumen de `channels` canales."""
        return [formation for formation in cls if formation.volume_channels == channels]
