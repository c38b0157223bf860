"""
Feed-forward reconstruction and rendering.

A scene comes either from a stored PLY or from the networks: anchors from depth, features from the encoder, raw
Gaussians from the decoder and optionally refiner passes. Compute stages are timed separately from file I/O.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import torch

from anchorsplat.anchors.sampler import build_anchors
from anchorsplat.config import RunConfig
from anchorsplat.errors import MissingCheckpointError
from anchorsplat.file_utils import write_json
from anchorsplat.geometry.cameras import CameraView
from anchorsplat.imaging import write_pfm, write_png
from anchorsplat.nets.decoder import forward_scene
from anchorsplat.paths import Paths
from anchorsplat.pipeline.manifest import LoadedScene
from anchorsplat.pipeline.training import REFINER_SECTION, load_refiner, load_stage_one
from anchorsplat.render.rasterizer import RenderOutput, render, tile_report
from anchorsplat.scene.model import GaussianScene
from anchorsplat.utils.runtime import StageTimer

logger = logging.getLogger(__name__)

RECON_STAGES = ('anchoring', 'decoding', 'refining')
TIMING_STAGES = RECON_STAGES + ('rendering',)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingCheckpointError(what)
    return path


def feed_forward(
    loaded: LoadedScene,
    config: RunConfig,
    checkpoint_dir: Path,
    use_refiner: bool = False,
    timer: Optional[StageTimer] = None,
) -> GaussianScene:
    """Anchors, lifted features and decoded Gaussians for the input views, refined when asked."""
    timer = timer or StageTimer()
    model = load_stage_one(_require(Paths.decoder_checkpoint(checkpoint_dir), 'decoder'), config)
    refiner = None
    if use_refiner:
        refiner = load_refiner(_require(Paths.refiner_checkpoint(checkpoint_dir), REFINER_SECTION), config)

    views = loaded.input_views
    with torch.no_grad():
        with timer.stage('anchoring'):
            anchors = build_anchors(views, config)
        with timer.stage('decoding'):
            anchors = model.lift(anchors, views)
            scene = forward_scene(anchors, model.decoder)
        if refiner is not None:
            with timer.stage('refining'):
                scene = refiner(
                    scene, anchors, views, config.render, config.features.visibility_tau, config.camera.z_near
                )
    return scene


def refine_stored(
    scene: GaussianScene,
    loaded: LoadedScene,
    config: RunConfig,
    checkpoint_dir: Path,
    timer: Optional[StageTimer] = None,
) -> GaussianScene:
    """
    Run the refiner on a stored scene.

    Anchor features are lifted with the stage-one encoder at the stored anchor positions, so any scene with anchors
    (fitted or decoded) can be refined.
    """
    timer = timer or StageTimer()
    model = load_stage_one(_require(Paths.decoder_checkpoint(checkpoint_dir), 'decoder'), config)
    refiner = load_refiner(_require(Paths.refiner_checkpoint(checkpoint_dir), REFINER_SECTION), config)

    views = loaded.input_views
    with torch.no_grad():
        with timer.stage('decoding'):
            anchors = model.lift(scene.anchors, views)
        with timer.stage('refining'):
            refined = refiner(
                scene.with_anchors(anchors),
                anchors,
                views,
                config.render,
                config.features.visibility_tau,
                config.camera.z_near,
            )
    return refined


def render_views(
    scene: GaussianScene,
    views: Sequence[CameraView],
    config: RunConfig,
    timer: Optional[StageTimer] = None,
) -> List[RenderOutput]:
    timer = timer or StageTimer()
    outputs = []
    with torch.no_grad():
        for view in views:
            with timer.stage('rendering'):
                outputs.append(render(scene, view, config.render, z_near=config.camera.z_near))
    return outputs


def write_renders(
    out_dir: Path,
    views: Sequence[CameraView],
    outputs: Sequence[RenderOutput],
    config: RunConfig,
    dump_tiles: bool = False,
):
    """<view>.png and <view>.depth.pfm per view, plus per-tile Gaussian counts when asked."""
    for view, output in zip(views, outputs):
        write_png(Paths.rendered_image(out_dir, view.name), output.rgb)
        write_pfm(Paths.rendered_depth(out_dir, view.name), output.depth)
        if dump_tiles:
            write_json(Paths.tiles_file(out_dir, view.name), tile_report(output, config.render.tile_size))


def timing_record(timer: StageTimer, scene: GaussianScene, source: str) -> Dict[str, Any]:
    """Seconds per stage (every stage listed, 0 when skipped); recon_time_s excludes rendering and I/O."""
    stages = {name: timer.seconds.get(name, 0.0) for name in TIMING_STAGES}
    return {
        'num_gs': scene.num_gs,
        'recon_time_s': sum(stages[name] for name in RECON_STAGES),
        'source': source,
        'stages': stages,
    }
