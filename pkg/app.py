#!/usr/bin/env python3
"""
Voxrec - reconstrucción 3D adversarial con renderizado volumétrico diferenciable.

Punto de entrada de la línea de comandos:

    python app.py synth --out data/spheres --shapes 20 --np 32
    python app.py train --dataset data/spheres --steps 2000 --formation ao
    python app.py reconstruct --checkpoint runs/last.pnet --image input.png --out recon.pvox
    python app.py render --volume recon.pvox --view 30,15 --formation ao --out view.png
    python app.py evaluate --recon recon.pvox --truth truth.pvox --out report.csv
    python app.py gradcheck --formation ea-paper --np 8
"""
import logging
import sys

from config import settings
from src.cli import run

# Configuración de logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL, logging.INFO), format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def main() -> int:
    problems = settings.validate()
    for problem in problems:
        logger.warning(f"⚠️ {problem}")
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
