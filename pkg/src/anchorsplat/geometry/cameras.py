"""
Pinhole camera model.

Extrinsics are camera-to-world: a camera-space point P_c maps to the world as P_w = R·P_c + T. Depth lookups use
integer pixel coordinates (u, v); ray directions go through pixel centers (u + 0.5, v + 0.5).
"""
import logging
from typing import NamedTuple, Optional, Sequence

import torch
from pydantic import BaseModel, Field, root_validator, validator

from anchorsplat.errors import InvalidCameraError, InvalidDepthError, NumericError

logger = logging.getLogger(__name__)

DEFAULT_Z_NEAR = 1e-4
_ORTHONORMAL_TOL = 1e-9


class Intrinsics(BaseModel):
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def principal_point_inside(cls, values):
        if not 0 <= values['cx'] < values['width']:
            raise ValueError(f'cx={values["cx"]} outside [0, {values["width"]})')
        if not 0 <= values['cy'] < values['height']:
            raise ValueError(f'cy={values["cy"]} outside [0, {values["height"]})')
        return values


class Extrinsics(BaseModel):
    """Camera-to-world pose; R is a proper rotation."""

    R: torch.Tensor
    T: torch.Tensor

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @validator('R', pre=True)
    def rotation_matrix(cls, value: torch.Tensor) -> torch.Tensor:
        value = torch.as_tensor(value, dtype=torch.float64)
        if value.shape != (3, 3):
            raise ValueError(f'R must be 3x3, got {tuple(value.shape)}')
        if not torch.isfinite(value).all():
            raise ValueError('R has non-finite entries')
        if (value @ value.T - torch.eye(3, dtype=torch.float64)).abs().max() > _ORTHONORMAL_TOL:
            raise ValueError('R is not orthonormal')
        if abs(torch.linalg.det(value).item() - 1.0) > _ORTHONORMAL_TOL:
            raise ValueError('R is not a proper rotation (det != 1)')
        return value

    @validator('T', pre=True)
    def translation(cls, value: torch.Tensor) -> torch.Tensor:
        value = torch.as_tensor(value, dtype=torch.float64)
        if value.shape != (3,):
            raise ValueError(f'T must be a 3-vector, got {tuple(value.shape)}')
        if not torch.isfinite(value).all():
            raise ValueError('T has non-finite entries')
        return value

    @classmethod
    def identity(cls) -> 'Extrinsics':
        return cls(R=torch.eye(3, dtype=torch.float64), T=torch.zeros(3, dtype=torch.float64))

    @classmethod
    def from_world_to_camera(cls, R: torch.Tensor, T: torch.Tensor) -> 'Extrinsics':
        """Invert a world-to-camera pose (P_c = R·P_w + T) into the camera-to-world convention."""
        R = torch.as_tensor(R, dtype=torch.float64)
        T = torch.as_tensor(T, dtype=torch.float64)
        return cls(R=R.T.contiguous(), T=-(R.T @ T))

    def compose(self, R: torch.Tensor, T: torch.Tensor) -> 'Extrinsics':
        """Pose after applying the rigid world motion x -> R·x + T."""
        R = torch.as_tensor(R, dtype=torch.float64)
        T = torch.as_tensor(T, dtype=torch.float64)
        return Extrinsics(R=R @ self.R, T=R @ self.T + T)

    @property
    def center(self) -> torch.Tensor:
        return self.T


class CameraView(BaseModel):
    """One posed observation: image H×W×3 in [0, 1], depth H×W (0 marks invalid pixels)."""

    image: torch.Tensor
    depth: torch.Tensor
    intrinsics: Intrinsics
    extrinsics: Extrinsics
    name: str = ''
    split: str = 'input'

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def consistent(cls, values):
        image, depth, K = values['image'], values['depth'], values['intrinsics']
        if tuple(image.shape) != (K.height, K.width, 3):
            raise ValueError(f'image shape {tuple(image.shape)} does not match {K.height}x{K.width}x3')
        if tuple(depth.shape) != (K.height, K.width):
            raise ValueError(f'depth shape {tuple(depth.shape)} does not match {K.height}x{K.width}')
        if not (torch.isfinite(image).all() and torch.isfinite(depth).all()):
            raise ValueError('image and depth must be finite')
        if (depth < 0).any():
            raise ValueError('depth must be non-negative')
        return values

    @property
    def height(self) -> int:
        return self.intrinsics.height

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def has_valid_depth(self) -> bool:
        return bool((self.depth > 0).any())


class Projection(NamedTuple):
    u: torch.Tensor
    v: torch.Tensor
    z: torch.Tensor
    behind: torch.Tensor


def _check_finite(what: str, *values: torch.Tensor):
    for value in values:
        if not torch.isfinite(torch.as_tensor(value, dtype=torch.float64)).all():
            raise NumericError(what)


def backproject_pixel(u: float, v: float, d: float, K: Intrinsics, E: Extrinsics) -> torch.Tensor:
    """World point seen at integer pixel (u, v) with camera depth d."""
    _check_finite('backproject_pixel', torch.tensor([u, v, d], dtype=torch.float64))
    if d <= 0:
        raise InvalidDepthError(d)

    p_cam = torch.tensor([(u - K.cx) / K.fx * d, (v - K.cy) / K.fy * d, d], dtype=torch.float64)
    return E.R @ p_cam + E.T


def world_to_camera(points: torch.Tensor, E: Extrinsics) -> torch.Tensor:
    """Rows of points (…×3) in camera coordinates: P_c = Rᵀ(P − T)."""
    return (points - E.T) @ E.R


def project_points(points: torch.Tensor, K: Intrinsics, E: Extrinsics, z_near: float = DEFAULT_Z_NEAR) -> Projection:
    """Batched projection of N×3 world points; differentiable in the points."""
    p_cam = world_to_camera(points, E)
    z = p_cam[..., 2]
    behind = z <= z_near
    # keep the division finite for flagged points
    safe_z = torch.where(behind, torch.ones_like(z), z)
    u = K.fx * p_cam[..., 0] / safe_z + K.cx
    v = K.fy * p_cam[..., 1] / safe_z + K.cy
    return Projection(u=u, v=v, z=z, behind=behind)


def project_point(P: torch.Tensor, K: Intrinsics, E: Extrinsics, z_near: float = DEFAULT_Z_NEAR) -> Projection:
    P = torch.as_tensor(P, dtype=torch.float64)
    _check_finite('project_point', P)
    return project_points(P, K, E, z_near)


def pixel_directions(u: torch.Tensor, v: torch.Tensor, K: Intrinsics, E: Extrinsics) -> torch.Tensor:
    """Unit world-space directions through pixel centers (u + 0.5, v + 0.5)."""
    x = (u + 0.5 - K.cx) / K.fx
    y = (v + 0.5 - K.cy) / K.fy
    d_cam = torch.stack([x, y, torch.ones_like(x)], dim=-1)
    d_world = d_cam @ E.R.T
    return d_world / torch.linalg.norm(d_world, dim=-1, keepdim=True)


def ray_embedding(u: float, v: float, K: Intrinsics, E: Extrinsics) -> torch.Tensor:
    """Plücker coordinates (d, o×d) of the ray through pixel (u, v)."""
    _check_finite('ray_embedding', torch.tensor([u, v], dtype=torch.float64))
    d = pixel_directions(
        torch.tensor(float(u), dtype=torch.float64), torch.tensor(float(v), dtype=torch.float64), K, E
    )
    return torch.cat([d, torch.linalg.cross(E.center, d)])


def ray_map(K: Intrinsics, E: Extrinsics) -> torch.Tensor:
    """H×W×6 Plücker embedding of every pixel."""
    v, u = torch.meshgrid(
        torch.arange(K.height, dtype=torch.float64), torch.arange(K.width, dtype=torch.float64), indexing='ij'
    )
    d = pixel_directions(u, v, K, E)
    moment = torch.linalg.cross(E.center.expand_as(d), d, dim=-1)
    return torch.cat([d, moment], dim=-1)


def backproject_depth(depth: torch.Tensor, K: Intrinsics, E: Extrinsics, stride: int = 1) -> torch.Tensor:
    """Row-major world points of every stride-th pixel with positive depth, as an N×3 tensor."""
    if stride < 1:
        raise ValueError(f'stride must be positive, got {stride}')

    rows = torch.arange(0, K.height, stride)
    cols = torch.arange(0, K.width, stride)
    sampled = depth[rows][:, cols]
    v, u = torch.meshgrid(rows.to(torch.float64), cols.to(torch.float64), indexing='ij')
    valid = sampled > 0
    d = sampled[valid]
    p_cam = torch.stack([(u[valid] - K.cx) / K.fx * d, (v[valid] - K.cy) / K.fy * d, d], dim=-1)
    return p_cam @ E.R.T + E.T


def backproject_view(view: CameraView, stride: int = 1) -> torch.Tensor:
    points = backproject_depth(view.depth, view.intrinsics, view.extrinsics, stride)
    logger.debug(f'View {view.name} back-projected to {len(points)} points')
    return points


def backproject_views(views: Sequence[CameraView], stride: int = 1) -> torch.Tensor:
    clouds = [backproject_view(view, stride) for view in views]
    return torch.cat(clouds) if clouds else torch.zeros((0, 3), dtype=torch.float64)


def look_at(eye: Sequence[float], target: Sequence[float], up: Optional[Sequence[float]] = None) -> Extrinsics:
    """Camera-to-world pose at eye looking at target, with +y down in the image."""
    eye_t = torch.tensor(eye, dtype=torch.float64)
    forward = torch.tensor(target, dtype=torch.float64) - eye_t
    norm = torch.linalg.norm(forward)
    if norm == 0:
        raise InvalidCameraError('eye and target coincide')
    forward = forward / norm

    up_t = torch.tensor(up if up is not None else [0.0, -1.0, 0.0], dtype=torch.float64)
    right = torch.linalg.cross(forward, up_t)
    if torch.linalg.norm(right) < 1e-12:
        raise InvalidCameraError('up vector parallel to viewing direction')
    right = right / torch.linalg.norm(right)
    down = torch.linalg.cross(forward, right)
    R = torch.stack([right, down, forward], dim=1)
    return Extrinsics(R=R, T=eye_t)
