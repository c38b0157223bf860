import math

import pytest
import torch

from anchorsplat.config import GaussianConfig
from anchorsplat.errors import ContractError, NonFiniteAttributeError
from anchorsplat.scene.model import (
    RAW_DIM,
    RAW_LAYOUT,
    GaussianScene,
    activate,
    covariance,
    neutral_raw,
    quaternion_to_matrix,
    sh_to_rgb,
)
from anchorsplat.scene.normalization import normalize_scene
from tests.anchorsplat.helpers import anchor_set


def test_neutral_raw_activation():
    config = GaussianConfig()
    act = activate(neutral_raw(3, config), config.offset_bound, config.scale_min, config.scale_max)

    assert torch.equal(act.offsets, torch.zeros((3, 3), dtype=torch.float64))
    assert act.opacities.tolist() == [0.5, 0.5, 0.5]
    assert torch.allclose(act.scales, torch.full((3, 3), config.init_scale, dtype=torch.float64))
    assert act.rotations.tolist() == [[1.0, 0.0, 0.0, 0.0]] * 3
    assert sh_to_rgb(act.sh).tolist() == [[0.5, 0.5, 0.5]] * 3


def test_activation_bounds():
    raw = torch.full((2, RAW_DIM), 50.0, dtype=torch.float64)
    raw[1] = -50.0
    act = activate(raw, bound=0.1, scale_min=1e-3, scale_max=0.4)

    assert float(act.offsets.abs().max()) <= 0.1
    assert float(act.scales.max()) == 0.4
    assert float(act.scales.min()) == 1e-3
    assert sh_to_rgb(act.sh).tolist() == [[1.0] * 3, [0.0] * 3]


def test_activation_rejects_wrong_width():
    with pytest.raises(ContractError):
        activate(torch.zeros((2, 13), dtype=torch.float64), bound=0.1)


def test_degenerate_quaternion_falls_back_to_identity():
    raw = neutral_raw(2, GaussianConfig())
    start, stop = RAW_LAYOUT['rotation']
    raw[0, start:stop] = 0.0
    raw[1, start:stop] = torch.tensor([0.0, 0.0, 0.0, 2.0])

    act = activate(raw, bound=0.1)

    assert act.degenerate_rotation.tolist() == [True, False]
    assert act.rotations.tolist() == [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]


def test_quaternion_to_matrix_is_rotation():
    q = torch.randn((16, 4), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    R = quaternion_to_matrix(q / torch.linalg.norm(q, dim=-1, keepdim=True))

    eye = torch.eye(3, dtype=torch.float64).expand(16, 3, 3)
    assert torch.allclose(R @ R.transpose(-1, -2), eye)
    assert torch.allclose(torch.linalg.det(R), torch.ones(16, dtype=torch.float64))


def test_covariance():
    scales = torch.tensor([[0.1, 0.2, 0.3]], dtype=torch.float64)
    identity = torch.tensor([[1.0, 0.0, 0.0, 0.0]], dtype=torch.float64)
    # 90 degrees around z swaps the x and y variances
    quarter = torch.tensor([[math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4)]], dtype=torch.float64)

    assert torch.allclose(covariance(scales, identity)[0], torch.diag(torch.tensor([0.01, 0.04, 0.09])).double())
    assert torch.allclose(covariance(scales, quarter)[0], torch.diag(torch.tensor([0.04, 0.01, 0.09])).double())


def test_scene_anchor_major_layout():
    anchors = anchor_set([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [-0.5, 0.0, 0.5]])
    scene = GaussianScene.neutral(anchors, GaussianConfig(per_anchor=3))

    assert scene.num_gs == 9
    assert scene.anchor_ids.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]
    assert torch.equal(scene.means(), anchors.positions.repeat_interleave(3, dim=0))


def test_scene_rejects_count_mismatch():
    anchors = anchor_set([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5]])

    with pytest.raises(ContractError, match='5 Gaussians for 2 anchors at 2 per anchor'):
        GaussianScene.from_config(anchors, torch.zeros((5, RAW_DIM), dtype=torch.float64), GaussianConfig(per_anchor=2))


def test_check_finite_names_attribute():
    anchors = anchor_set([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5]])
    scene = GaussianScene.neutral(anchors, GaussianConfig(per_anchor=2))
    scene.raw[3, RAW_LAYOUT['opacity'][0]] = math.nan

    with pytest.raises(NonFiniteAttributeError, match='Gaussian 3 has a non-finite opacity') as e:
        scene.check_finite()
    assert e.value.gaussian_id == 3


def test_world_attributes_are_denormalized():
    anchors = anchor_set([[0.5, 0.0, 0.0]], center=(1.0, 2.0, 3.0), half_extent=4.0)
    config = GaussianConfig(per_anchor=1)
    world = GaussianScene.neutral(anchors, config).world()

    assert world.means.tolist() == [[3.0, 2.0, 3.0]]
    expected = (config.init_scale * 4.0) ** 2
    assert torch.allclose(world.covariances[0], expected * torch.eye(3, dtype=torch.float64))


def test_normalize_scene():
    points = torch.tensor([[0.0, 0.0, 0.0], [4.0, 2.0, 1.0], [2.0, 1.0, 0.5]], dtype=torch.float64)
    normalization, normalized = normalize_scene(points)

    assert normalization.half_extent == 2.0
    assert normalization.center.tolist() == [2.0, 1.0, 0.5]
    assert normalized[:, 0].tolist() == [-1.0, 1.0, 0.0]
    assert torch.allclose(normalization.denormalize(normalized), points)
