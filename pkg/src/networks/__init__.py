"""
Redes aprendibles: encoder, generador y discriminador.
"""
from src.networks.layers import NetworkParams
from src.networks.models import NETWORKS, ReconstructionNetworks

__all__ = ["NETWORKS", "NetworkParams", "ReconstructionNetworks"]
