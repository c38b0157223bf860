"""
Two-stage training.

Stage one trains the view encoder and the Gaussian decoder on the full objective. Stage two freezes both, loads
them from the stage-one checkpoint and trains the refiner on the rendering loss alone. Scenes take turns one step
at a time; within a scene, input views are used round-robin.
"""
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn
from tqdm import tqdm

from anchorsplat.anchors.sampler import AnchorSet, build_anchors
from anchorsplat.config import RunConfig
from anchorsplat.errors import TrainingDivergenceError
from anchorsplat.file_utils import read_json, write_csv, write_json
from anchorsplat.nets.checkpoint import load_checkpoint, module_checkpoint, restore_module, save_checkpoint
from anchorsplat.nets.decoder import StageOneModel, forward_scene
from anchorsplat.nets.refiner import GaussianRefiner
from anchorsplat.objectives.losses import LOSS_TERMS, image_loss, total_loss
from anchorsplat.paths import Paths
from anchorsplat.pipeline.manifest import LoadedScene
from anchorsplat.pipeline.schedule import round_robin, scene_round_robin
from anchorsplat.render.rasterizer import render
from anchorsplat.scene.model import GaussianScene
from anchorsplat.utils.runtime import seed_everything, versions

logger = logging.getLogger(__name__)

STAGE_ONE = 'stage1'
STAGE_TWO = 'stage2'
DECODER_SECTION = 'decoder'
REFINER_SECTION = 'refiner'

STAGE_ONE_FIELDS = ['step', 'scene', 'total'] + list(LOSS_TERMS)
STAGE_TWO_FIELDS = ['step', 'scene', 'image']


def load_stage_one(path: Path, config: RunConfig) -> StageOneModel:
    """Frozen encoder and decoder from a stage-one checkpoint."""
    model = StageOneModel(config)
    restore_module(model, load_checkpoint(path, DECODER_SECTION))
    model.requires_grad_(False)
    return model


def load_refiner(path: Path, config: RunConfig) -> GaussianRefiner:
    refiner = GaussianRefiner(config)
    restore_module(refiner, load_checkpoint(path, REFINER_SECTION))
    refiner.requires_grad_(False)
    return refiner


def write_reproducibility(out_dir: Path, stage: str, config: RunConfig, scenes: Sequence[LoadedScene]):
    """Add this stage's record (config hash, seed, versions, scenes) to the run's reproducibility file."""
    path = Paths.reproducibility_file(out_dir)
    data: Dict[str, Any] = read_json(path) if path.exists() else {}
    data[stage] = {
        'config': config.to_dict(),
        'config_hash': config.config_hash(),
        'depth_provenance': {s.name: s.depth_provenance for s in scenes},
        'scenes': [s.name for s in scenes],
        'seed': config.seed,
        'versions': versions(),
    }
    write_json(path, data)


class _Run:
    """Optimizer loop state shared by both stages: trace, checkpointing and resume."""

    def __init__(
        self,
        *,
        stage: str,
        section: str,
        module: nn.Module,
        optimizer: torch.optim.Optimizer,
        checkpoint_path: Path,
        config: RunConfig,
    ):
        self.stage = stage
        self.section = section
        self.module = module
        self.optimizer = optimizer
        self.checkpoint_path = checkpoint_path
        self.config = config
        self.trace: List[Dict[str, Any]] = []
        self.start = 0
        self.saved_step: Optional[int] = None

    def resume(self):
        checkpoint = load_checkpoint(self.checkpoint_path, self.section)
        restore_module(self.module, checkpoint)
        state = checkpoint.optimizer_state()
        if state is not None:
            self.optimizer.load_state_dict(state)
        self.start = int(checkpoint.meta['step'])
        self.trace = list(checkpoint.meta.get('trace', []))
        self.saved_step = self.start
        logger.debug(f'Resumed {self.stage} from step {self.start}')

    def record(self, step: int, scene_name: str, terms: Dict[str, torch.Tensor]):
        entry: Dict[str, Any] = {'step': step, 'scene': scene_name}
        entry.update({name: float(value) for name, value in terms.items()})
        self.trace.append(entry)
        if not all(math.isfinite(float(value)) for value in terms.values()):
            raise TrainingDivergenceError(stage=self.stage, step=step, trace=self.trace)

    def save(self, step: int):
        meta = {'config': self.config.to_dict(), 'stage': self.stage, 'step': step, 'trace': self.trace}
        save_checkpoint(self.checkpoint_path, module_checkpoint(self.section, self.module, meta, self.optimizer))
        self.saved_step = step

    def maybe_save(self, step: int, total: int):
        if step % self.config.optim.checkpoint_every == 0 or step == total:
            self.save(step)

    def finish(self, total: int):
        if self.saved_step is None or self.saved_step < total:
            self.save(total)


def _descend(run: _Run, loss: torch.Tensor, step: int):
    run.optimizer.zero_grad()
    loss.backward()
    run.optimizer.step()
    for name, parameter in run.module.named_parameters():
        if parameter.requires_grad and not bool(torch.isfinite(parameter).all()):
            raise TrainingDivergenceError(
                stage=run.stage, step=step, trace=run.trace, detail=f'parameter {name} is not finite'
            )


def train_stage1(
    scenes: Sequence[LoadedScene],
    config: RunConfig,
    out_dir: Path,
    resume: bool = False,
    show_progress: bool = False,
) -> List[Dict[str, Any]]:
    """Train encoder and decoder on the full objective; returns the loss trace."""
    seed_everything(config.seed)
    model = StageOneModel(config)
    run = _Run(
        stage=STAGE_ONE,
        section=DECODER_SECTION,
        module=model,
        optimizer=torch.optim.Adam(model.parameters(), lr=config.optim.lr),
        checkpoint_path=Paths.decoder_checkpoint(out_dir),
        config=config,
    )
    if resume and run.checkpoint_path.exists():
        run.resume()
    write_reproducibility(out_dir, STAGE_ONE, config, scenes)

    anchors = [build_anchors(loaded.input_views, config) for loaded in scenes]
    total = config.optim.stage1_steps
    bar = tqdm(total=total, initial=min(run.start, total), disable=not show_progress, desc=STAGE_ONE)
    for step in range(run.start, total):
        index, local_step = scene_round_robin(len(scenes), step)
        loaded = scenes[index]
        batch = round_robin(loaded.input_views, config.optim.views_per_step, local_step)

        try:
            scene = model(anchors[index], loaded.input_views)
        except TrainingDivergenceError as e:
            raise TrainingDivergenceError(stage=STAGE_ONE, step=step, trace=run.trace, detail=str(e))
        renders = [render(scene, view, config.render, z_near=config.camera.z_near) for view in batch]
        terms = total_loss(renders, batch, scene, config.loss)
        run.record(step, loaded.name, terms)
        _descend(run, terms['total'], step)

        run.maybe_save(step + 1, total)
        bar.update()
        if (step + 1) % config.optim.checkpoint_every == 0:
            bar.write(f'{STAGE_ONE} step {step + 1}: loss {run.trace[-1]["total"]:.6f}')
    bar.close()

    run.finish(total)
    write_csv(Paths.stage_trace(out_dir, STAGE_ONE), run.trace, STAGE_ONE_FIELDS)
    return run.trace


def _stage_two_inputs(
    model: StageOneModel, loaded: LoadedScene, config: RunConfig
) -> Tuple[AnchorSet, GaussianScene]:
    with torch.no_grad():
        anchors = model.lift(build_anchors(loaded.input_views, config), loaded.input_views)
        return anchors, forward_scene(anchors, model.decoder).detach()


def train_stage2(
    scenes: Sequence[LoadedScene],
    config: RunConfig,
    out_dir: Path,
    resume: bool = False,
    show_progress: bool = False,
) -> List[Dict[str, Any]]:
    """Train the refiner on the rendering loss with the stage-one networks frozen; returns the loss trace."""
    model = load_stage_one(Paths.decoder_checkpoint(out_dir), config)
    prepared = [_stage_two_inputs(model, loaded, config) for loaded in scenes]

    seed_everything(config.seed)
    refiner = GaussianRefiner(config)
    run = _Run(
        stage=STAGE_TWO,
        section=REFINER_SECTION,
        module=refiner,
        optimizer=torch.optim.Adam(refiner.parameters(), lr=config.optim.lr),
        checkpoint_path=Paths.refiner_checkpoint(out_dir),
        config=config,
    )
    if resume and run.checkpoint_path.exists():
        run.resume()
    write_reproducibility(out_dir, STAGE_TWO, config, scenes)

    total = config.optim.stage2_steps
    bar = tqdm(total=total, initial=min(run.start, total), disable=not show_progress, desc=STAGE_TWO)
    for step in range(run.start, total):
        index, local_step = scene_round_robin(len(scenes), step)
        loaded = scenes[index]
        anchors, base = prepared[index]
        batch = round_robin(loaded.input_views, config.optim.views_per_step, local_step)

        refined = refiner(
            base,
            anchors,
            loaded.input_views,
            config.render,
            config.features.visibility_tau,
            config.camera.z_near,
        )
        renders = [render(refined, view, config.render, z_near=config.camera.z_near) for view in batch]
        loss = image_loss(renders, batch, config.loss)
        run.record(step, loaded.name, {'image': loss})
        _descend(run, loss, step)

        run.maybe_save(step + 1, total)
        bar.update()
        if (step + 1) % config.optim.checkpoint_every == 0:
            bar.write(f'{STAGE_TWO} step {step + 1}: loss {float(loss):.6f}')
    bar.close()

    run.finish(total)
    write_csv(Paths.stage_trace(out_dir, STAGE_TWO), run.trace, STAGE_TWO_FIELDS)
    return run.trace


def train(
    scenes: Sequence[LoadedScene],
    config: RunConfig,
    out_dir: Path,
    stages: Sequence[str] = (STAGE_ONE, STAGE_TWO),
    resume: bool = False,
    show_progress: bool = False,
) -> Dict[str, List[Dict[str, Any]]]:
    traces: Dict[str, List[Dict[str, Any]]] = {}
    if STAGE_ONE in stages:
        traces[STAGE_ONE] = train_stage1(scenes, config, out_dir, resume, show_progress)
    if STAGE_TWO in stages:
        traces[STAGE_TWO] = train_stage2(scenes, config, out_dir, resume, show_progress)
    return traces
