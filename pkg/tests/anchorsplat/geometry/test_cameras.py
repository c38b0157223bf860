import math

import pydantic
import pytest
import torch

from anchorsplat.errors import InvalidCameraError, InvalidDepthError, NumericError
from anchorsplat.geometry.cameras import (
    Extrinsics,
    Intrinsics,
    backproject_depth,
    backproject_pixel,
    look_at,
    project_point,
    project_points,
    ray_embedding,
    ray_map,
)
from tests.anchorsplat.helpers import intrinsics

K = Intrinsics(fx=100.0, fy=90.0, cx=16.0, cy=12.0, width=32, height=24)


@pytest.fixture
def pose():
    return look_at((1.0, 0.5, -3.0), (0.0, 0.0, 0.0))


@pytest.mark.parametrize('u,v,d', [(0, 0, 1.0), (5, 7, 2.5), (31, 23, 0.3), (16, 12, 10.0)])
def test_backproject_project_round_trip(pose, u, v, d):
    P = backproject_pixel(u, v, d, K, pose)
    projection = project_point(P, K, pose)

    assert not bool(projection.behind)
    assert float(projection.u) == pytest.approx(u, abs=1e-9)
    assert float(projection.v) == pytest.approx(v, abs=1e-9)
    assert float(projection.z) == pytest.approx(d, abs=1e-9)


@pytest.mark.parametrize('depth', [0.0, -1.0])
def test_backproject_rejects_non_positive_depth(pose, depth):
    with pytest.raises(InvalidDepthError, match='^Depth must be positive'):
        backproject_pixel(3, 4, depth, K, pose)


def test_backproject_rejects_nan(pose):
    with pytest.raises(NumericError):
        backproject_pixel(3, math.nan, 1.0, K, pose)


def test_project_point_rejects_inf(pose):
    with pytest.raises(NumericError):
        project_point(torch.tensor([0.0, math.inf, 1.0]), K, pose)


def test_project_flags_points_behind_camera():
    E = Extrinsics.identity()
    projection = project_points(torch.tensor([[0.0, 0.0, 2.0], [0.0, 0.0, -2.0], [0.0, 0.0, 0.0]]), K, E)

    assert projection.behind.tolist() == [False, True, True]
    assert torch.isfinite(projection.u).all()


def test_look_at_centers_target(pose):
    projection = project_point(torch.zeros(3, dtype=torch.float64), K, pose)

    assert float(projection.u) == pytest.approx(K.cx)
    assert float(projection.v) == pytest.approx(K.cy)
    assert float(projection.z) == pytest.approx(math.sqrt(1.0 + 0.25 + 9.0))


def test_look_at_image_y_points_down():
    E = look_at((0.0, 0.0, -2.0), (0.0, 0.0, 0.0))
    below = project_point(torch.tensor([0.0, 1.0, 0.0]), K, E)

    assert float(below.v) > K.cy


def test_look_at_rejects_coincident_points():
    with pytest.raises(InvalidCameraError):
        look_at((1.0, 1.0, 1.0), (1.0, 1.0, 1.0))


def test_extrinsics_rejects_non_orthonormal():
    with pytest.raises(pydantic.ValidationError, match='not orthonormal'):
        Extrinsics(R=torch.diag(torch.tensor([1.0, 2.0, 1.0])), T=torch.zeros(3))


def test_extrinsics_rejects_reflection():
    with pytest.raises(pydantic.ValidationError, match='proper rotation'):
        Extrinsics(R=torch.diag(torch.tensor([1.0, 1.0, -1.0])), T=torch.zeros(3))


def test_intrinsics_rejects_principal_point_outside():
    with pytest.raises(pydantic.ValidationError):
        Intrinsics(fx=10.0, fy=10.0, cx=40.0, cy=5.0, width=32, height=24)


def test_from_world_to_camera_inverts_pose(pose):
    w2c = Extrinsics.from_world_to_camera(pose.R.T, -(pose.R.T @ pose.T))

    assert torch.allclose(w2c.R, pose.R)
    assert torch.allclose(w2c.T, pose.T)


def test_compose_moves_camera_with_world():
    E = Extrinsics.identity()
    moved = E.compose(torch.eye(3, dtype=torch.float64), torch.tensor([1.0, 2.0, 3.0]))

    assert moved.center.tolist() == [1.0, 2.0, 3.0]


def test_ray_embedding_is_plucker(pose):
    ray = ray_embedding(4, 9, K, pose)
    direction, moment = ray[:3], ray[3:]

    assert float(torch.linalg.norm(direction)) == pytest.approx(1.0)
    assert float(direction @ moment) == pytest.approx(0.0, abs=1e-12)
    assert torch.allclose(moment, torch.linalg.cross(pose.center, direction))


def test_ray_map_matches_single_rays(pose):
    rays = ray_map(K, pose)

    assert rays.shape == (24, 32, 6)
    assert torch.allclose(rays[7, 4], ray_embedding(4, 7, K, pose))


def test_identity_camera_has_zero_moment():
    rays = ray_map(K, Extrinsics.identity())

    assert torch.equal(rays[..., 3:], torch.zeros_like(rays[..., 3:]))


def test_backproject_depth_skips_invalid_pixels():
    K_small = intrinsics(4, 4)
    depth = torch.ones((4, 4), dtype=torch.float64)
    depth[0, 0] = 0.0
    depth[2, 2] = 0.0

    assert len(backproject_depth(depth, K_small, Extrinsics.identity())) == 14
    # stride 2 samples rows and columns 0 and 2
    assert len(backproject_depth(depth, K_small, Extrinsics.identity(), stride=2)) == 2


def test_backproject_depth_matches_single_pixels(pose):
    depth = torch.full((24, 32), 2.0, dtype=torch.float64)
    points = backproject_depth(depth, K, pose)

    # row-major order
    assert torch.allclose(points[32 * 3 + 5], backproject_pixel(5, 3, 2.0, K, pose))
