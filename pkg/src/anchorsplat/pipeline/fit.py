"""
Direct per-scene fitting.

The raw Gaussian parameters of a fixed anchor set are optimized with Adam against the full training objective; no
network is involved. Offsets stay bounded through the same activation the decoder output goes through.
"""
import logging
import math
from typing import Any, Dict, List, NamedTuple

import torch
from tqdm import tqdm

from anchorsplat.anchors.sampler import build_anchors
from anchorsplat.config import RunConfig
from anchorsplat.errors import TrainingDivergenceError
from anchorsplat.objectives.losses import LOSS_TERMS, total_loss
from anchorsplat.objectives.metrics import MetricsReport
from anchorsplat.pipeline.evaluate import evaluate_scene
from anchorsplat.pipeline.manifest import LoadedScene
from anchorsplat.pipeline.schedule import round_robin
from anchorsplat.render.rasterizer import render
from anchorsplat.scene.model import GaussianScene, neutral_raw
from anchorsplat.utils.runtime import StageTimer, seed_everything

logger = logging.getLogger(__name__)

TRACE_FIELDS = ['step', 'total'] + list(LOSS_TERMS)


class FitResult(NamedTuple):
    scene: GaussianScene
    report: MetricsReport
    trace: List[Dict[str, Any]]


def trace_record(step: int, terms: Dict[str, torch.Tensor]) -> Dict[str, Any]:
    return {'step': step, **{name: float(terms[name]) for name in ['total'] + list(LOSS_TERMS)}}


def fit(loaded: LoadedScene, config: RunConfig, show_progress: bool = False) -> FitResult:
    seed_everything(config.seed)
    timer = StageTimer()
    views = loaded.input_views

    with timer.stage('anchoring'):
        anchors = build_anchors(views, config)

    raw = neutral_raw(config.gaussians.per_anchor * len(anchors), config.gaussians).requires_grad_(True)
    optimizer = torch.optim.Adam([raw], lr=config.optim.fit_lr)
    trace: List[Dict[str, Any]] = []

    bar = tqdm(total=config.optim.fit_steps, disable=not show_progress, desc=f'fit {loaded.name}')
    with timer.stage('fitting'):
        for step in range(config.optim.fit_steps):
            batch = round_robin(views, config.optim.fit_views_per_step, step)
            scene = GaussianScene.from_config(anchors, raw, config.gaussians)
            renders = [render(scene, view, config.render, z_near=config.camera.z_near) for view in batch]
            terms = total_loss(renders, batch, scene, config.loss)

            trace.append(trace_record(step, terms))
            if not math.isfinite(trace[-1]['total']):
                raise TrainingDivergenceError(stage='fit', step=step, trace=trace)

            optimizer.zero_grad()
            terms['total'].backward()
            optimizer.step()
            if not bool(torch.isfinite(raw).all()):
                raise TrainingDivergenceError(stage='fit', step=step, trace=trace, detail='parameters are not finite')
            bar.update()
    bar.close()

    fitted = GaussianScene.from_config(anchors, raw.detach().clone(), config.gaussians)
    logger.debug(f'Fitted {fitted.num_gs} Gaussians in {timer.total:.2f}s')
    # scenes without held-out views are scored on their input views
    eval_views = loaded.novel_views or loaded.input_views
    report = evaluate_scene(fitted, eval_views, config, recon_time_s=timer.total)
    return FitResult(scene=fitted, report=report, trace=trace)
