"""
Interfaz de línea de comandos: synth | train | reconstruct | render | evaluate | gradcheck.

Códigos de salida: 0 éxito, 1 entrada inválida (errores validados y de uso), 2 error interno.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from config import settings
from src.config import CliConfig, TrainConfig, build_config, parse_key_value_file
from src.errors import ConfigurationError, VoxrecError
from src.integrations.checkpoint_files import load_checkpoint
from src.integrations.dataset_files import load_collection
from src.integrations.image_files import load_image, save_image
from src.integrations.volume_files import load_volume, save_volume
from src.networks.models import ReconstructionNetworks
from src.render.formation import ImageFormation
from src.render.projections import render
from src.services.evaluation_service import DEFAULT_EPSILON, DEFAULT_THRESHOLD, evaluation_service
from src.services.gradcheck_service import gradcheck_service
from src.services.result_formatter import ResultFormatter
from src.services.synthesis_service import DEFAULT_VIEWS_PER_SHAPE, synthesis_service
from src.services.training_service import training_service
from src.volume.views import ViewDirection, view_from_angles

logger = logging.getLogger(__name__)

FORMATION_CHOICES = [formation.value for formation in ImageFormation]
# Vistas fijas de las imágenes que acompañan a una reconstrucción
RECONSTRUCTION_VIEWS = ((0.0, 0.0), (90.0, 0.0), (180.0, 0.0), (270.0, 0.0))
# Flags de `train` que se fusionan con el archivo de configuración
TRAIN_OVERRIDES = (
    "formation", "steps", "batch_size", "lambda_rec", "preset", "z_dim", "learning_rate",
    "checkpoint_every", "log_every", "holdout_shapes", "dataset", "output_dir", "dtype",
    "log_domain", "non_saturating",
)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser que termina con código 1 ante errores de uso."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_view(value: str) -> ViewDirection:
    """'az,el' en grados -> ViewDirection ('0,0' es ω₀)."""
    try:
        azimuth, elevation = (float(part) for part in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"vista inválida '{value}', se esperaba 'azimut,elevación' en grados")
    return view_from_angles(azimuth, elevation)


def _field_default(name: str):
    return TrainConfig.model_fields[name].default


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help=f"semilla de toda la aleatoriedad (por defecto {settings.DEFAULT_SEED})")
    parser.add_argument("--threads", type=int, help=f"hilos de los kernels numéricos, 1 = determinista (por defecto {settings.THREADS})")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help=f"por defecto {settings.LOG_LEVEL}")


def _fill_environment_defaults(args) -> None:
    """Completa los flags comunes omitidos; en train el archivo de configuración tiene prioridad sobre el entorno."""
    if args.command == "train":
        return
    if args.seed is None:
        args.seed = settings.DEFAULT_SEED
    if args.threads is None:
        args.threads = settings.THREADS


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voxrec", description="Renderizado volumétrico diferenciable y reconstrucción 3D adversarial")
    subcommands = parser.add_subparsers(dest="command", required=True, metavar="{synth,train,reconstruct,render,evaluate,gradcheck}")
    formatter = argparse.ArgumentDefaultsHelpFormatter

    synth = subcommands.add_parser("synth", help="genera un dataset sintético", formatter_class=formatter)
    synth.add_argument("--out", required=True, help="directorio del dataset")
    synth.add_argument("--shapes", type=int, default=20, help="número de formas")
    synth.add_argument("--views", type=int, default=DEFAULT_VIEWS_PER_SHAPE, help="vistas por forma")
    synth.add_argument("--family", choices=["sphere", "mixed"], default="sphere")
    synth.add_argument("--formation", choices=FORMATION_CHOICES, default=ImageFormation.AO.value)
    synth.add_argument("--np", dest="resolution", type=int, default=32, help="resolución n_p")
    _common(synth)

    train = subcommands.add_parser("train", help="entrena encoder, generador y discriminador")
    train.add_argument("--config", help="archivo key = value con la configuración")
    train.add_argument("--dataset", help="directorio del dataset (manifest.csv)")
    train.add_argument("--out", dest="output_dir", help=f"directorio de checkpoints (por defecto {settings.OUTPUT_DIR})")
    train.add_argument("--formation", choices=FORMATION_CHOICES, help=f"formación de imagen (por defecto {_field_default('formation').value})")
    train.add_argument("--steps", type=int, help=f"pasos (por defecto {_field_default('steps')})")
    train.add_argument("--batch-size", type=int, help=f"tamaño de lote (por defecto {_field_default('batch_size')})")
    train.add_argument("--lambda-rec", type=float, help=f"peso λ de la reconstrucción (por defecto {_field_default('lambda_rec')})")
    train.add_argument("--preset", help=f"preset de arquitectura (por defecto {_field_default('preset')})")
    train.add_argument("--z-dim", type=int, help="dimensión latente (por defecto la del preset)")
    train.add_argument("--learning-rate", type=float, help=f"tasa de aprendizaje (por defecto {_field_default('learning_rate')})")
    train.add_argument("--checkpoint-every", type=int, help=f"cadencia de checkpoints (por defecto {_field_default('checkpoint_every')})")
    train.add_argument("--log-every", type=int, help=f"cadencia del log (por defecto {_field_default('log_every')})")
    train.add_argument("--holdout-shapes", type=int, help="formas reservadas para evaluar; 0 desactiva (por defecto 1 si el dataset tiene manifest.csv con dos o más formas)")
    train.add_argument("--dtype", choices=["float32", "float64"], help="precisión (por defecto float32)")
    train.add_argument("--log-domain", action="store_const", const=True, help="transmitancia por suma de logaritmos (por defecto desactivado)")
    train.add_argument("--non-saturating", action="store_const", const=True, help="coste del generador −log D (por defecto desactivado)")
    _common(train)

    reconstruct = subcommands.add_parser("reconstruct", help="reconstruye un volumen a partir de una imagen", formatter_class=formatter)
    reconstruct.add_argument("--checkpoint", required=True, help="checkpoint PNET")
    reconstruct.add_argument("--image", required=True, help="imagen PNG de entrada")
    reconstruct.add_argument("--out", required=True, help="volumen PVOX de salida")
    reconstruct.add_argument("--formation", choices=FORMATION_CHOICES, default=None,
                             help="formación de los renders (por defecto ao o ea-paper según los canales)")
    _common(reconstruct)

    render_cmd = subcommands.add_parser("render", help="renderiza un volumen desde una vista", formatter_class=formatter)
    render_cmd.add_argument("--volume", required=True, help="volumen PVOX")
    render_cmd.add_argument("--view", type=parse_view, default="0,0", help="vista 'azimut,elevación' en grados")
    render_cmd.add_argument("--formation", choices=FORMATION_CHOICES, default=ImageFormation.AO.value)
    render_cmd.add_argument("--log-domain", action="store_true")
    render_cmd.add_argument("--out", required=True, help="PNG de salida")
    _common(render_cmd)

    evaluate = subcommands.add_parser("evaluate", help="compara una reconstrucción con su verdad", formatter_class=formatter)
    evaluate.add_argument("--recon", required=True, help="volumen PVOX reconstruido")
    evaluate.add_argument("--truth", required=True, help="volumen PVOX de verdad")
    evaluate.add_argument("--formations", default="all", help="lista separada por comas de formaciones para DSSIM, o 'all'")
    evaluate.add_argument("--view-seed", type=int, default=None, help="semilla de las 10 vistas (por defecto --seed)")
    evaluate.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="umbral de IoU")
    evaluate.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="corte de ocupación de chamfer")
    evaluate.add_argument("--out", default=None, help="CSV del informe")
    _common(evaluate)

    gradcheck = subcommands.add_parser("gradcheck", help="verifica los gradientes analíticos", formatter_class=formatter)
    gradcheck.add_argument("--formation", choices=FORMATION_CHOICES, default=ImageFormation.EA_PAPER.value)
    gradcheck.add_argument("--np", dest="resolution", type=int, default=8, help="resolución de los volúmenes de prueba")
    gradcheck.add_argument("--log-domain", action="store_true")
    _common(gradcheck)
    return parser


# ---------------------------------------------------------------------------
# Subcomandos
# ---------------------------------------------------------------------------

def _synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    formation = ImageFormation.parse(args.formation)
    family = synthesis_service.sphere_family if args.family == "sphere" else synthesis_service.mixed_family
    recipes = family(args.shapes, rng, colored=formation.is_emission)
    dataset = synthesis_service.synth_dataset(recipes, formation, rng, args.resolution, args.views)
    synthesis_service.write_dataset(dataset, args.out)
    return 0


def _train(args) -> int:
    file_values = parse_key_value_file(args.config) if args.config else {}
    overrides: Dict[str, object] = {name: getattr(args, name) for name in TRAIN_OVERRIDES}
    overrides.update(seed=args.seed, threads=args.threads, log_level=args.log_level)
    config = build_config(CliConfig, file_values, overrides)
    logging.getLogger().setLevel(getattr(logging, config.log_level.upper(), logging.INFO))
    if not config.dataset:
        raise ConfigurationError("train requiere --dataset o 'dataset = ...' en el archivo de configuración")
    formation = config.formation
    dataset = load_collection(config.dataset, config.n_p, formation.image_channels)
    with threadpool_limits(limits=config.threads):
        result = training_service.train(dataset, config, config.output_dir)
    print(ResultFormatter.format_training_summary(result.reports, result.checkpoints, result.evaluation))
    return 0


def _reconstruct(args) -> int:
    networks = ReconstructionNetworks.from_params(load_checkpoint(args.checkpoint))
    if args.formation:
        formation = ImageFormation.parse(args.formation)
        formation.check_volume(networks.volume_channels)
    else:
        formation = ImageFormation.AO if networks.volume_channels == 1 else ImageFormation.EA_PAPER
    image = load_image(args.image, resolution=networks.architecture.resolution, channels=networks.image_channels)
    grid = training_service.reconstruct(image, networks)
    out = save_volume(grid, args.out)
    for azimuth, elevation in RECONSTRUCTION_VIEWS:
        rendered = render(view_from_angles(azimuth, elevation), grid, formation)
        save_image(rendered, out.with_name(f"{out.stem}_az{int(azimuth):03d}_el{int(elevation):+03d}.png"))
    logger.info(f"✅ Reconstrucción guardada en {out} (+{len(RECONSTRUCTION_VIEWS)} renders)")
    return 0


def _render(args) -> int:
    grid = load_volume(args.volume)
    formation = ImageFormation.parse(args.formation)
    save_image(render(args.view, grid, formation, args.log_domain), args.out)
    return 0


def _evaluate(args) -> int:
    recon, truth = load_volume(args.recon), load_volume(args.truth)
    if args.formations.strip().lower() == "all":
        formations = None
    else:
        formations = [ImageFormation.parse(name) for name in args.formations.split(",")]
        for formation in formations:
            formation.check_volume(truth.channels)
    view_seed = args.seed if args.view_seed is None else args.view_seed
    report = evaluation_service.evaluate(
        recon, truth, formations, view_seed=view_seed, threshold=args.threshold, epsilon=args.epsilon,
        label=Path(args.recon).stem,
    )
    formatted = ResultFormatter.format_eval_reports([report], evaluation_service.aggregate([report]))
    if args.out:
        Path(args.out).write_text(formatted["csv"], encoding="utf-8")
    print(formatted["summary_report"])
    return 0


def _gradcheck(args) -> int:
    if args.resolution < 4 or args.resolution % 4:
        raise ConfigurationError(f"--np debe ser múltiplo de 4 (recibió {args.resolution})")
    results = gradcheck_service.run_suite(
        ImageFormation.parse(args.formation), args.resolution, args.seed, args.log_domain
    )
    print(ResultFormatter.format_gradcheck(results))
    return 0 if all(result.passed for result in results) else 1


COMMANDS = {
    "synth": _synth,
    "train": _train,
    "reconstruct": _reconstruct,
    "render": _render,
    "evaluate": _evaluate,
    "gradcheck": _gradcheck,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Ejecuta un subcomando.

    Args:
        argv: Argumentos sin el nombre del programa

    Returns:
        Código de salida
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1

    _fill_environment_defaults(args)
    level = getattr(logging, str(args.log_level or settings.LOG_LEVEL).upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
    logging.getLogger().setLevel(level)
    threads = settings.THREADS if args.threads is None else args.threads
    if threads < 1:
        logger.error(f"❌ --threads debe ser >= 1 (recibió {threads})")
        return 1

    try:
        with threadpool_limits(limits=threads):
            return COMMANDS[args.command](args)
    except VoxrecError as e:
        logger.error(f"❌ {e}")
        return 1
    except Exception as e:
        logger.exception(f"❌ Error interno en '{args.command}': {e}")
        return 2
