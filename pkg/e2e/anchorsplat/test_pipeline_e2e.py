from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from anchorsplat.cli import cli
from anchorsplat.file_utils import read_json
from anchorsplat.paths import Paths
from tests.anchorsplat.helpers import TINY_SECTIONS


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / 'tiny.yaml'
    path.write_text(yaml.safe_dump(TINY_SECTIONS))
    return path


@pytest.fixture
def scene(tmp_path) -> Path:
    scene_dir = tmp_path / 'scene'
    result = CliRunner().invoke(
        cli,
        [
            '--out',
            str(scene_dir),
            '--seed',
            '3',
            'gen-scene',
            'textured-planes',
            '--views',
            '4',
            '--novel',
            '1',
            '--width',
            '32',
            '--height',
            '24',
        ],
    )
    assert result.exit_code == 0, result.output
    return scene_dir


def test_fit_render_eval_e2e(tmp_path, config_file, scene):
    runner = CliRunner()
    fit_dir = tmp_path / 'fit'
    render_dir = tmp_path / 'render'

    result = runner.invoke(cli, ['--config', str(config_file), 'validate', str(scene)])
    assert result.exit_code == 0
    assert result.output == 'Success: All files are valid.\n'

    result = runner.invoke(cli, ['--config', str(config_file), '--out', str(fit_dir), 'fit', str(scene)])
    assert result.exit_code == 0, result.output
    assert Paths.scene_ply(fit_dir).exists()
    assert Paths.stage_trace(fit_dir, 'fit').exists()
    assert read_json(Paths.report_file(fit_dir))['views'][0]['name'] == 'novel_000'

    result = runner.invoke(
        cli,
        [
            '--config',
            str(config_file),
            '--out',
            str(render_dir),
            'render',
            str(scene),
            '--ply',
            str(Paths.scene_ply(fit_dir)),
        ],
    )
    assert result.exit_code == 0, result.output
    assert Paths.rendered_image(render_dir, 'novel_000').exists()
    assert Paths.rendered_depth(render_dir, 'novel_000').exists()
    # a stored scene is rendered as is
    assert not Paths.scene_ply(render_dir).exists()

    result = runner.invoke(cli, ['eval', str(scene), str(render_dir)])
    assert result.exit_code == 0, result.output
    assert result.output.startswith('PSNR ')
    report = read_json(Paths.report_file(render_dir))
    assert report['num_gs'] == read_json(Paths.timing_file(render_dir))['num_gs']
    assert [view['name'] for view in report['views']] == ['novel_000']


def test_train_render_eval_e2e(tmp_path, config_file, scene):
    runner = CliRunner()
    train_dir = tmp_path / 'train'
    render_dir = tmp_path / 'render'

    result = runner.invoke(cli, ['--config', str(config_file), '--out', str(train_dir), 'train', str(scene)])
    assert result.exit_code == 0, result.output
    assert Paths.decoder_checkpoint(train_dir).exists()
    assert Paths.refiner_checkpoint(train_dir).exists()
    assert Paths.reproducibility_file(train_dir).exists()

    result = runner.invoke(
        cli,
        [
            '--config',
            str(config_file),
            '--out',
            str(render_dir),
            'render',
            str(scene),
            '--checkpoint-dir',
            str(train_dir),
            '--refiner',
            '--dump-tiles',
        ],
    )
    assert result.exit_code == 0, result.output
    assert Paths.scene_ply(render_dir).exists()
    assert Paths.tiles_file(render_dir, 'novel_000').exists()

    result = runner.invoke(cli, ['--out', str(tmp_path / 'eval'), 'eval', str(scene), str(render_dir)])
    assert result.exit_code == 0, result.output
    assert Paths.report_file(tmp_path / 'eval').exists()


def test_render_without_checkpoint_e2e(tmp_path, config_file, scene):
    result = CliRunner().invoke(
        cli, ['--config', str(config_file), '--out', str(tmp_path / 'render'), 'render', str(scene)]
    )

    assert result.exit_code == 1
    assert result.output.startswith('Error: A decoder checkpoint is required')


def test_validate_broken_scene_e2e(scene):
    (Paths.images_dir(scene) / 'input_001.png').unlink()

    result = CliRunner().invoke(cli, ['validate', str(scene)])

    assert result.exit_code == 1
    assert 'Error: ' in result.output
    assert 'input_001.png' in result.output


def test_fit_is_thread_count_independent_e2e(tmp_path, config_file, scene):
    runner = CliRunner()
    outputs = []
    for threads in ('1', '4'):
        out_dir = tmp_path / f'threads-{threads}'
        result = runner.invoke(
            cli, ['--config', str(config_file), '--threads', threads, '--out', str(out_dir), 'fit', str(scene)]
        )
        assert result.exit_code == 0, result.output
        outputs.append((Paths.scene_ply(out_dir).read_bytes(), Paths.stage_trace(out_dir, 'fit').read_text()))

    assert outputs[0] == outputs[1]


def test_ablate_multiplicity_e2e(tmp_path, config_file, scene):
    out_dir = tmp_path / 'ablation'

    result = CliRunner().invoke(
        cli, ['--config', str(config_file), '--out', str(out_dir), 'ablate', str(scene), '--axis', 'multiplicity']
    )

    assert result.exit_code == 0, result.output
    rows = read_json(Paths.ablation_table(out_dir, 'multiplicity', '.json'))['rows']
    num_gs = [row['num_gs'] for row in rows]
    assert len(rows) == 5
    assert [n // num_gs[0] for n in num_gs] == [1, 2, 4, 8, 16]
