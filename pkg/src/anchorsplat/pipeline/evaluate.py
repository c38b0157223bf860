import logging
from pathlib import Path
from typing import List, Optional, Sequence

import torch

from anchorsplat.config import RunConfig
from anchorsplat.errors import InvalidViewFileError
from anchorsplat.file_utils import read_json
from anchorsplat.geometry.cameras import CameraView
from anchorsplat.imaging import read_pfm, read_png
from anchorsplat.objectives.metrics import MetricsReport, ViewMetrics, view_metrics
from anchorsplat.paths import Paths
from anchorsplat.pipeline.manifest import NOVEL_SPLIT, LoadedScene
from anchorsplat.render.rasterizer import render
from anchorsplat.scene.model import GaussianScene

logger = logging.getLogger(__name__)


def evaluate_scene(
    scene: GaussianScene, views: Sequence[CameraView], config: RunConfig, recon_time_s: float = 0.0
) -> MetricsReport:
    """Render views from the scene in memory and score them against their ground truth."""
    per_view = []
    with torch.no_grad():
        for view in views:
            output = render(scene, view, config.render, z_near=config.camera.z_near)
            per_view.append(view_metrics(view.name, output.rgb, output.depth, view.image, view.depth))
    return MetricsReport.from_views(per_view, num_gs=scene.num_gs, recon_time_s=recon_time_s)


def evaluate_dir(loaded: LoadedScene, rendered_dir: Path, split: str = NOVEL_SPLIT) -> MetricsReport:
    """
    Score rendered PNG/PFM files named after the views of a split.

    NumGS and reconstruction time come from the timing record next to the renders, when present.
    """
    views = loaded.split(split)
    per_view: List[ViewMetrics] = []
    for view in views:
        rgb = read_png(Paths.rendered_image(rendered_dir, view.name))
        depth = read_pfm(Paths.rendered_depth(rendered_dir, view.name))
        if rgb.shape != view.image.shape or depth.shape != view.depth.shape:
            raise InvalidViewFileError(
                path=Paths.rendered_image(rendered_dir, view.name), reason=f'size does not match view {view.name}'
            )
        per_view.append(view_metrics(view.name, rgb, depth, view.image, view.depth))

    num_gs, recon_time_s = 0, 0.0
    timing_path = Paths.timing_file(rendered_dir)
    if timing_path.exists():
        timing = read_json(timing_path)
        num_gs = int(timing.get('num_gs', 0))
        recon_time_s = float(timing.get('recon_time_s', 0.0))
    else:
        logger.debug(f'No timing record in {rendered_dir}')

    return MetricsReport.from_views(per_view, num_gs=num_gs, recon_time_s=recon_time_s)


def merge_reports(reports: Sequence[MetricsReport], recon_time_s: Optional[float] = None) -> MetricsReport:
    """Pool the per-view rows of several scenes into one report; NumGS adds up across scenes."""
    views = [v for report in reports for v in report.views]
    total_time = sum(r.recon_time_s for r in reports) if recon_time_s is None else recon_time_s
    return MetricsReport.from_views(views, num_gs=sum(r.num_gs for r in reports), recon_time_s=total_time)
