import logging
from collections import defaultdict
from pathlib import Path
from typing import List, Optional, Sequence

import torch

from anchorsplat.config import RunConfig
from anchorsplat.errors import NumericError, ValidationError, ValidationErrorSeverity
from anchorsplat.file_utils import write_bytes, write_csv, write_json
from anchorsplat.paths import Paths
from anchorsplat.print import echo_errors, echo_info, echo_metrics, echo_warnings

logger = logging.getLogger(__name__)


def _load_scenes(scene_dirs: Sequence[Path]):
    from anchorsplat.pipeline.manifest import load_scene

    scenes = [load_scene(scene_dir) for scene_dir in scene_dirs]
    warnings = [w for scene in scenes for w in scene.warnings]
    if warnings:
        echo_warnings(warnings)
        echo_info('')
    return scenes


def gen_scene(preset: str, out_dir: Path, seed: int, views: int, novel: int, width: int, height: int):
    from anchorsplat.pipeline.synthetic import gen_scene as generate

    manifest = generate(preset, out_dir, seed=seed, views=views, novel=novel, width=width, height=height)
    echo_info(f'Generated {manifest["name"]} with {views} input and {novel} novel views in {out_dir}')


def anchors(scene_dir: Path, config: RunConfig, out_dir: Path, dump_features: bool, checkpoint_dir: Optional[Path]):
    """Place anchors for the input views; with dump_features also lift and store their features."""
    from anchorsplat.anchors.sampler import build_anchors
    from anchorsplat.anchors.storage import write_anchors
    from anchorsplat.features.lift import encode_feature_dump
    from anchorsplat.nets.decoder import StageOneModel
    from anchorsplat.pipeline.training import load_stage_one
    from anchorsplat.utils.runtime import seed_everything

    (loaded,) = _load_scenes([scene_dir])
    anchor_set = build_anchors(loaded.input_views, config)
    write_anchors(Paths.anchors_ply(out_dir), anchor_set)
    echo_info(f'Placed {len(anchor_set)} anchors from {anchor_set.source_count} points')

    if dump_features:
        if checkpoint_dir is not None:
            model = load_stage_one(Paths.decoder_checkpoint(checkpoint_dir), config)
        else:
            seed_everything(config.seed)
            model = StageOneModel(config)
        with torch.no_grad():
            lifted = model.lift(anchor_set, loaded.input_views)
        write_bytes(Paths.features_file(out_dir), encode_feature_dump(lifted))
        echo_info(f'Wrote {lifted.feature_dim}-dimensional features to {Paths.features_file(out_dir)}')


def fit(scene_dir: Path, config: RunConfig, out_dir: Path):
    from anchorsplat.pipeline.fit import TRACE_FIELDS
    from anchorsplat.pipeline.fit import fit as fit_scene
    from anchorsplat.scene.ply import save_scene

    (loaded,) = _load_scenes([scene_dir])
    result = fit_scene(loaded, config, show_progress=True)
    save_scene(Paths.scene_ply(out_dir), result.scene)
    write_json(Paths.report_file(out_dir), result.report.to_dict())
    write_csv(Paths.stage_trace(out_dir, 'fit'), result.trace, TRACE_FIELDS)
    echo_info(f'Fitted {result.scene.num_gs} Gaussians')
    echo_metrics(result.report)


def train(scene_dirs: Sequence[Path], config: RunConfig, out_dir: Path, stages: Sequence[str], resume: bool):
    from anchorsplat.pipeline.training import train as train_stages

    scenes = _load_scenes(scene_dirs)
    traces = train_stages(scenes, config, out_dir, stages=stages, resume=resume, show_progress=True)
    for stage, trace in traces.items():
        if trace:
            last = trace[-1]
            echo_info(f'{stage}: {len(trace)} steps, final loss {last.get("total", last.get("image")):.6f}')


def render(
    scene_dir: Path,
    config: RunConfig,
    out_dir: Path,
    ply: Optional[Path],
    checkpoint_dir: Path,
    use_refiner: bool,
    split: str,
    dump_tiles: bool,
):
    """Render a split of the scene from a stored PLY or feed-forward from checkpoints."""
    from anchorsplat.pipeline.reconstruct import (
        feed_forward,
        refine_stored,
        render_views,
        timing_record,
        write_renders,
    )
    from anchorsplat.scene.ply import load_scene_ply, save_scene
    from anchorsplat.utils.runtime import StageTimer

    (loaded,) = _load_scenes([scene_dir])
    views = loaded.split(split)
    timer = StageTimer()

    if ply is not None:
        scene = load_scene_ply(ply)
        if use_refiner:
            scene = refine_stored(scene, loaded, config, checkpoint_dir, timer)
        source = 'ply'
    else:
        scene = feed_forward(loaded, config, checkpoint_dir, use_refiner, timer)
        source = 'feed-forward'

    outputs = render_views(scene, views, config, timer)
    write_renders(out_dir, views, outputs, config, dump_tiles)
    if ply is None or use_refiner:
        save_scene(Paths.scene_ply(out_dir), scene)
    timing = timing_record(timer, scene, source)
    write_json(Paths.timing_file(out_dir), timing)
    echo_info(f'Rendered {len(views)} views of {scene.num_gs} Gaussians in {out_dir}')
    echo_info(f'Reconstruction took {timing["recon_time_s"]:.2f}s')


def evaluate(scene_dir: Path, rendered_dir: Path, report_path: Path, split: str):
    """Score renders and write the report; NaN metrics raise NumericError."""
    from anchorsplat.pipeline.evaluate import evaluate_dir
    from anchorsplat.validate import validate_report

    (loaded,) = _load_scenes([scene_dir])
    report = evaluate_dir(loaded, rendered_dir, split)
    if report.has_nan():
        raise NumericError('metrics report')

    data = report.to_dict()
    validate_report(data, report_path)
    write_json(report_path, data)
    echo_metrics(report)


def ablate(scene_dirs: Sequence[Path], axis: str, config: RunConfig, out_dir: Path):
    from anchorsplat.pipeline.ablate import ablate as run_ablation

    scenes = _load_scenes(scene_dirs)
    rows = run_ablation(axis, scenes, config, out_dir, show_progress=True)
    echo_info(f'Wrote {len(rows)} {axis} rows to {out_dir}')


def validate(scene_dirs: Sequence[Path], config_path: Optional[Path]) -> bool:
    """Check scene directories and the config file against their schemas."""
    from anchorsplat.config import load_config
    from anchorsplat.validate import validate_scene_dir

    errors: List[ValidationError] = []
    if config_path is not None:
        try:
            load_config(config_path)
        except ValidationError as e:
            errors.append(e)

    for scene_dir in scene_dirs:
        errors.extend(validate_scene_dir(scene_dir))

    errors_by_severity = defaultdict(list)
    for error in errors:
        errors_by_severity[error.severity].append(error)

    if len(errors_by_severity[ValidationErrorSeverity.WARNING]) > 0:
        echo_warnings(errors_by_severity[ValidationErrorSeverity.WARNING])
        echo_info('')

    if len(errors_by_severity[ValidationErrorSeverity.ERROR]) > 0:
        echo_errors(errors_by_severity[ValidationErrorSeverity.ERROR])
        return False

    echo_info('Success: All files are valid.')
    return True
