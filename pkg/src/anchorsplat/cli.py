import logging
import os
import sys
from pathlib import Path
from typing import NamedTuple, Optional, Tuple

import click
from dotenv import load_dotenv

from anchorsplat.__version__ import __version__
from anchorsplat.errors import handle_exception, handle_interrupt
from anchorsplat.paths import Paths

_SCENE_DIR = click.Path(exists=True, file_okay=False, path_type=Path)
_PRESETS = ['box-room', 'textured-planes', 'sphere-field']
_AXES = ['pooling', 'multiplicity', 'views', 'inputs']
_SPLITS = ['input', 'novel', 'all']


class GlobalOptions(NamedTuple):
    config_path: Optional[Path]
    seed: Optional[int]
    threads: Optional[int]
    out: Optional[Path]


def _options(ctx: click.Context) -> GlobalOptions:
    return ctx.find_root().obj


def _out_dir(ctx: click.Context, default: Path) -> Path:
    out = _options(ctx).out
    return out if out is not None else default


def _run_config(ctx: click.Context, **sections):
    """
    Configuration for a command: config file, then --seed and --threads.

    Threads fall back to ASPLAT_THREADS (environment or .env) before the file value.
    """
    from anchorsplat.config import load_config
    from anchorsplat.utils.runtime import THREADS_ENV_VAR, configure_threads

    opts = _options(ctx)
    threads = opts.threads
    if threads is None and os.environ.get(THREADS_ENV_VAR):
        threads = int(os.environ[THREADS_ENV_VAR])
    config = load_config(opts.config_path, {'seed': opts.seed, 'threads': threads})
    if sections:
        config = config.evolve(**sections)
    configure_threads(config.threads)
    return config


@click.group(context_settings={'help_option_names': ["-h", "--help"]}, help='')
@click.option(
    '--config', 'config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path), help='Run config file'
)
@click.option('--seed', type=click.IntRange(min=0), help='Seed overriding the config file')
@click.option('--threads', type=click.IntRange(min=1), help='Tile workers (fallback: ASPLAT_THREADS)')
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@click.option('--debug', is_flag=True, help='Enables debug mode')
@click.version_option(__version__)
@click.pass_context
@handle_exception
def cli(ctx: click.Context, config_path: Optional[Path], seed: Optional[int], threads: Optional[int], out, debug):
    """Anchor-aligned Gaussian splatting: anchors, fitting, training, rendering and evaluation."""
    if debug:
        logger = logging.getLogger()
        logger.setLevel(logging.DEBUG)

    load_dotenv(dotenv_path=Paths.dotenv_file())
    ctx.obj = GlobalOptions(config_path=config_path, seed=seed, threads=threads, out=out)


@cli.command(name='gen-scene', help='Generate a ray-traced synthetic scene')
@click.argument('preset', type=click.Choice(_PRESETS))
@click.option('--views', type=click.IntRange(min=1), default=8, show_default=True, help='Input views')
@click.option('--novel', type=click.IntRange(min=0), default=2, show_default=True, help='Novel views')
@click.option('--width', type=click.IntRange(min=8), default=128, show_default=True)
@click.option('--height', type=click.IntRange(min=8), default=96, show_default=True)
@click.pass_context
@handle_exception
@handle_interrupt
def gen_scene(ctx: click.Context, preset: str, views: int, novel: int, width: int, height: int):
    from anchorsplat.command import gen_scene as gen_scene_command

    opts = _options(ctx)
    gen_scene_command(
        preset,
        _out_dir(ctx, Path(preset)),
        seed=opts.seed or 0,
        views=views,
        novel=novel,
        width=width,
        height=height,
    )


@cli.command(help='Place anchors for the input views of a scene')
@click.argument('scene_dir', type=_SCENE_DIR)
@click.option('--dump-features', is_flag=True, help='Also write the lifted anchor feature matrix')
@click.option(
    '--checkpoint-dir',
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help='Directory with decoder.aspl whose encoder lifts the features',
)
@click.pass_context
@handle_exception
@handle_interrupt
def anchors(ctx: click.Context, scene_dir: Path, dump_features: bool, checkpoint_dir: Optional[Path]):
    from anchorsplat.command import anchors as anchors_command

    anchors_command(scene_dir, _run_config(ctx), _out_dir(ctx, Path('out')), dump_features, checkpoint_dir)


@cli.command(help='Fit Gaussians of one scene directly, without networks')
@click.argument('scene_dir', type=_SCENE_DIR)
@click.pass_context
@handle_exception
@handle_interrupt
def fit(ctx: click.Context, scene_dir: Path):
    from anchorsplat.command import fit as fit_command

    fit_command(scene_dir, _run_config(ctx), _out_dir(ctx, Path('out')))


@cli.command(help='Train the decoder (stage 1) and the refiner (stage 2)')
@click.argument('scene_dirs', type=_SCENE_DIR, nargs=-1, required=True)
@click.option('--stage', type=click.Choice(['1', '2', 'both']), default='both', show_default=True)
@click.option('--resume', is_flag=True, help='Continue from the checkpoints in the output directory')
@click.pass_context
@handle_exception
@handle_interrupt
def train(ctx: click.Context, scene_dirs: Tuple[Path, ...], stage: str, resume: bool):
    from anchorsplat.command import train as train_command
    from anchorsplat.pipeline.training import STAGE_ONE, STAGE_TWO

    stages = {'1': [STAGE_ONE], '2': [STAGE_TWO], 'both': [STAGE_ONE, STAGE_TWO]}[stage]
    train_command(list(scene_dirs), _run_config(ctx), _out_dir(ctx, Path('out')), stages, resume)


@cli.command(help='Render views of a scene from a PLY or feed-forward from checkpoints')
@click.argument('scene_dir', type=_SCENE_DIR)
@click.option('--ply', type=click.Path(exists=True, dir_okay=False, path_type=Path), help='Stored scene to render')
@click.option(
    '--checkpoint-dir',
    type=click.Path(file_okay=False, path_type=Path),
    help='Directory with decoder.aspl and refiner.aspl (default: output directory)',
)
@click.option('--refiner', 'use_refiner', is_flag=True, help='Apply the trained refiner')
@click.option('--refine-passes', type=click.IntRange(min=1), help='Refiner passes')
@click.option('--pooling', type=click.Choice(['avg', 'max', 'fifo']), help='Anchor feature pooling')
@click.option('--split', type=click.Choice(_SPLITS), default='novel', show_default=True)
@click.option('--dump-tiles', is_flag=True, help='Write per-tile Gaussian counts')
@click.pass_context
@handle_exception
@handle_interrupt
def render(
    ctx: click.Context,
    scene_dir: Path,
    ply: Optional[Path],
    checkpoint_dir: Optional[Path],
    use_refiner: bool,
    refine_passes: Optional[int],
    pooling: Optional[str],
    split: str,
    dump_tiles: bool,
):
    from anchorsplat.command import render as render_command

    sections = {}
    if refine_passes is not None:
        sections['refiner'] = {'passes': refine_passes}
    if pooling is not None:
        sections['features'] = {'pooling': pooling}
    out_dir = _out_dir(ctx, Path('out'))
    render_command(
        scene_dir,
        _run_config(ctx, **sections),
        out_dir,
        ply,
        checkpoint_dir if checkpoint_dir is not None else out_dir,
        use_refiner,
        split,
        dump_tiles,
    )


@cli.command(name='eval', help='Score rendered views against the scene ground truth')
@click.argument('scene_dir', type=_SCENE_DIR)
@click.argument('rendered_dir', type=_SCENE_DIR)
@click.option('--split', type=click.Choice(_SPLITS), default='novel', show_default=True)
@click.pass_context
@handle_exception
def evaluate(ctx: click.Context, scene_dir: Path, rendered_dir: Path, split: str):
    from anchorsplat.command import evaluate as evaluate_command

    report_path = Paths.report_file(_out_dir(ctx, rendered_dir))
    evaluate_command(scene_dir, rendered_dir, report_path, split)


@cli.command(help='Sweep one ablation axis and write a comparison table')
@click.argument('scene_dirs', type=_SCENE_DIR, nargs=-1, required=True)
@click.option('--axis', type=click.Choice(_AXES), required=True)
@click.pass_context
@handle_exception
@handle_interrupt
def ablate(ctx: click.Context, scene_dirs: Tuple[Path, ...], axis: str):
    from anchorsplat.command import ablate as ablate_command

    ablate_command(list(scene_dirs), axis, _run_config(ctx), _out_dir(ctx, Path('out')))


@cli.command(help='Validate scene directories and the config file')
@click.argument('scene_dirs', type=click.Path(file_okay=False, path_type=Path), nargs=-1)
@click.pass_context
@handle_exception
def validate(ctx: click.Context, scene_dirs: Tuple[Path, ...]):
    from anchorsplat.command import validate as validate_command

    if not validate_command(list(scene_dirs), _options(ctx).config_path):
        sys.exit(1)
