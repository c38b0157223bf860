"""
Ablation sweeps.

Every axis produces one row per value with the aggregate metrics over all scenes. Axes that only change the
representation (multiplicity, input view count) use direct fitting; axes that change the learned path (pooling,
input channels) train stage one per cell and reconstruct feed-forward.
"""
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

from tqdm import tqdm

from anchorsplat.anchors.sampler import anchor_budget
from anchorsplat.config import RunConfig
from anchorsplat.errors import ContractError
from anchorsplat.file_utils import write_csv, write_json
from anchorsplat.objectives.metrics import MetricsReport, serialize_metric
from anchorsplat.paths import FileExtension, Paths
from anchorsplat.pipeline.evaluate import evaluate_scene, merge_reports
from anchorsplat.pipeline.fit import fit
from anchorsplat.pipeline.manifest import LoadedScene
from anchorsplat.pipeline.reconstruct import feed_forward
from anchorsplat.pipeline.schedule import uniform_subset
from anchorsplat.pipeline.training import train_stage1
from anchorsplat.utils.runtime import StageTimer

logger = logging.getLogger(__name__)

POOLING_VALUES = ('avg', 'max', 'fifo')
MULTIPLICITY_VALUES = (1, 2, 4, 8, 16)
VIEW_COUNTS = (2, 4, 8)
# (use_depth, use_rays) per input variant
INPUT_VARIANTS: Dict[str, Tuple[bool, bool]] = {
    'rgb': (False, False),
    'rgb+depth': (True, False),
    'rgb+ray': (False, True),
    'rgb+ray+depth': (True, True),
}
AXES = ('pooling', 'multiplicity', 'views', 'inputs')

ROW_FIELDS = ['axis', 'value', 'psnr', 'ssim', 'absrel', 'delta1', 'num_gs', 'recon_time_s']


def table_row(axis: str, value: Any, report: MetricsReport) -> Dict[str, Any]:
    return {
        'absrel': report.absrel,
        'axis': axis,
        'delta1': report.delta1,
        'num_gs': report.num_gs,
        'psnr': serialize_metric(report.psnr),
        'recon_time_s': report.recon_time_s,
        'ssim': report.ssim,
        'value': str(value),
    }


def _eval_views(loaded: LoadedScene):
    return loaded.novel_views or loaded.input_views


def with_input_views(loaded: LoadedScene, count: int) -> LoadedScene:
    """Same scene restricted to count input views spread evenly over the original ones."""
    inputs = loaded.input_views
    if count > len(inputs):
        raise ContractError(f'scene {loaded.name} has {len(inputs)} input views, {count} requested')
    return LoadedScene(
        name=loaded.name,
        units=loaded.units,
        depth_provenance=loaded.depth_provenance,
        views=uniform_subset(inputs, count) + loaded.novel_views,
        warnings=loaded.warnings,
        generator=loaded.generator,
    )


def fit_cell(scenes: Sequence[LoadedScene], configs: Sequence[RunConfig]) -> MetricsReport:
    return merge_reports([fit(loaded, config).report for loaded, config in zip(scenes, configs)])


def learned_cell(scenes: Sequence[LoadedScene], config: RunConfig, work_dir: Path) -> MetricsReport:
    train_stage1(scenes, config, work_dir)
    reports = []
    for loaded in scenes:
        timer = StageTimer()
        scene = feed_forward(loaded, config, work_dir, timer=timer)
        reports.append(evaluate_scene(scene, _eval_views(loaded), config, recon_time_s=timer.total))
    return merge_reports(reports)


def _cells(
    axis: str, scenes: Sequence[LoadedScene], config: RunConfig, work_dir: Path
) -> List[Tuple[Any, Callable[[], MetricsReport]]]:
    if axis == 'pooling':
        return [
            (mode, lambda mode=mode: learned_cell(scenes, config.evolve(features={'pooling': mode}), work_dir / mode))
            for mode in POOLING_VALUES
        ]

    if axis == 'inputs':
        cells = []
        for name, (use_depth, use_rays) in INPUT_VARIANTS.items():
            cfg = config.evolve(features={'use_depth': use_depth, 'use_rays': use_rays})
            cells.append((name, lambda cfg=cfg, name=name: learned_cell(scenes, cfg, work_dir / name)))
        return cells

    if axis == 'multiplicity':
        return [
            (k, lambda k=k: fit_cell(scenes, [config.evolve(gaussians={'per_anchor': k})] * len(scenes)))
            for k in MULTIPLICITY_VALUES
        ]

    if axis == 'views':
        subsets = {count: [with_input_views(loaded, count) for loaded in scenes] for count in VIEW_COUNTS}
        # one anchor budget per scene, the smallest over all view counts, so NumGS is equal across rows
        budgets = [
            min(anchor_budget(subsets[count][i].input_views, config) for count in VIEW_COUNTS)
            for i in range(len(scenes))
        ]
        configs = [config.evolve(anchors={'budget': budget}) for budget in budgets]
        return [(count, lambda count=count: fit_cell(subsets[count], configs)) for count in VIEW_COUNTS]

    raise ContractError(f'unknown ablation axis {axis}, expected one of {", ".join(AXES)}')


def ablate(
    axis: str,
    scenes: Sequence[LoadedScene],
    config: RunConfig,
    out_dir: Path,
    show_progress: bool = False,
) -> List[Dict[str, Any]]:
    """Run every cell of the axis and write ablation_<axis>.json and .csv to out_dir."""
    cells = _cells(axis, scenes, config, out_dir / f'ablation_{axis}')
    rows = []
    bar = tqdm(total=len(cells), disable=not show_progress, desc=f'ablate {axis}')
    for value, run_cell in cells:
        report = run_cell()
        rows.append(table_row(axis, value, report))
        bar.write(f'{axis}={value}: psnr {report.psnr:.3f} dB, NumGS {report.num_gs}')
        bar.update()
    bar.close()

    table = {'axis': axis, 'rows': rows, 'scenes': [s.name for s in scenes]}
    write_json(Paths.ablation_table(out_dir, axis, FileExtension.JSON.value), table)
    write_csv(Paths.ablation_table(out_dir, axis, FileExtension.CSV.value), rows, ROW_FIELDS)
    return rows
