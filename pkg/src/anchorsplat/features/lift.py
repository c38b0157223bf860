"""Per-view input stacking, convolutional encoding, and projection of feature maps onto 3D points."""
import json
import logging
import struct
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.config import FeatureConfig, PoolingMode
from anchorsplat.errors import ContractError
from anchorsplat.geometry.cameras import DEFAULT_Z_NEAR, CameraView, project_points, ray_map

logger = logging.getLogger(__name__)

INPUT_CHANNELS = 10
ENCODER_SCALE = 4


class FeatureMap(NamedTuple):
    data: torch.Tensor
    scale_factor: int
    view_id: int


class InputMask(NamedTuple):
    """Which modalities feed the encoder; masked channels are zeroed, the channel count never changes."""

    rgb: bool = True
    depth: bool = True
    rays: bool = True

    @classmethod
    def from_config(cls, config: FeatureConfig) -> 'InputMask':
        return cls(rgb=True, depth=config.use_depth, rays=config.use_rays)


def stack_inputs(view: CameraView, half_extent: float, mask: InputMask = InputMask()) -> torch.Tensor:
    """H×W×10: RGB, depth / half_extent, Plücker ray (direction, moment)."""
    rgb = view.image if mask.rgb else torch.zeros_like(view.image)
    depth = view.depth / half_extent if mask.depth else torch.zeros_like(view.depth)
    rays = ray_map(view.intrinsics, view.extrinsics)
    if not mask.rays:
        rays = torch.zeros_like(rays)
    return torch.cat([rgb, depth[..., None], rays], dim=-1)


class Encoder(nn.Module):
    """Two stride-2 3×3 convolutions with tanh in between; output is 1/4 of the input resolution."""

    def __init__(self, feature_dim: int = 32):
        super().__init__()
        self.conv1 = nn.Conv2d(INPUT_CHANNELS, feature_dim, kernel_size=3, stride=2, padding=1, dtype=torch.float64)
        self.conv2 = nn.Conv2d(feature_dim, feature_dim, kernel_size=3, stride=2, padding=1, dtype=torch.float64)

    @property
    def feature_dim(self) -> int:
        return self.conv2.out_channels

    def forward(self, stacked: torch.Tensor) -> torch.Tensor:
        if stacked.dim() != 3 or stacked.shape[-1] != INPUT_CHANNELS:
            raise ContractError(f'encoder expects H×W×{INPUT_CHANNELS} input, got {tuple(stacked.shape)}')
        x = stacked.permute(2, 0, 1)[None]
        x = self.conv2(torch.tanh(self.conv1(x)))
        return x[0].permute(1, 2, 0)


def encode_view(stacked: torch.Tensor, encoder: Encoder, view_id: int = 0) -> FeatureMap:
    height, width = stacked.shape[:2]
    if height % ENCODER_SCALE or width % ENCODER_SCALE:
        raise ContractError(f'image size {height}x{width} is not divisible by {ENCODER_SCALE}')
    return FeatureMap(data=encoder(stacked), scale_factor=ENCODER_SCALE, view_id=view_id)


def visibility_mask(
    points: torch.Tensor, view: CameraView, tau: float, z_near: float = DEFAULT_Z_NEAR
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Depth-consistent visibility of N world points in a view.

    A point is visible when it projects in bounds in front of the camera, the depth map is valid at the nearest pixel
    and agrees with the point depth to a relative tolerance tau. Returns (mask, u, v).
    """
    with torch.no_grad():
        proj = project_points(points.detach(), view.intrinsics, view.extrinsics, z_near)
        col = torch.round(proj.u)
        row = torch.round(proj.v)
        inside = ~proj.behind & (col >= 0) & (col < view.width) & (row >= 0) & (row < view.height)
        col_i = col.clamp(0, view.width - 1).to(torch.long)
        row_i = row.clamp(0, view.height - 1).to(torch.long)
        observed = view.depth[row_i, col_i]
        z = torch.where(proj.behind, torch.ones_like(proj.z), proj.z)
        consistent = (observed - z).abs() / z <= tau
        mask = inside & (observed > 0) & consistent

    proj = project_points(points, view.intrinsics, view.extrinsics, z_near)
    return mask, proj.u, proj.v


def visibility(anchor: torch.Tensor, view: CameraView, tau: float = 0.05, z_near: float = DEFAULT_Z_NEAR) -> bool:
    mask, _, _ = visibility_mask(torch.as_tensor(anchor, dtype=torch.float64)[None], view, tau, z_near)
    return bool(mask[0])


def bilinear_sample(data: torch.Tensor, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Sample an h×w×C map at continuous cell coordinates, clamped to the border."""
    h, w = data.shape[:2]
    x = x.clamp(0, w - 1)
    y = y.clamp(0, h - 1)
    x0 = torch.floor(x).detach()
    y0 = torch.floor(y).detach()
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    x0i = x0.to(torch.long)
    y0i = y0.to(torch.long)
    x1i = (x0i + 1).clamp(max=w - 1)
    y1i = (y0i + 1).clamp(max=h - 1)

    top = data[y0i, x0i] * (1 - fx) + data[y0i, x1i] * fx
    bottom = data[y1i, x0i] * (1 - fx) + data[y1i, x1i] * fx
    return top * (1 - fy) + bottom * fy


def pool(samples: torch.Tensor, masks: torch.Tensor, mode: PoolingMode) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Pool V×N×C per-view samples under V×N visibility masks.

    Returns N×C pooled features and N visible counts; points seen by no view get zeros.
    """
    counts = masks.sum(dim=0)
    seen = (counts > 0)[:, None]
    weights = masks.to(samples.dtype)[..., None]

    if mode == PoolingMode.AVERAGE:
        pooled = (samples * weights).sum(dim=0) / counts.clamp(min=1)[:, None].to(samples.dtype)
    elif mode == PoolingMode.MAX:
        masked = torch.where(masks[..., None], samples, torch.full_like(samples, -torch.inf))
        pooled = torch.where(seen, masked.max(dim=0).values, torch.zeros_like(samples[0]))
    elif mode == PoolingMode.FIFO:
        first = torch.argmax(masks.to(torch.int8), dim=0)
        pooled = samples[first, torch.arange(samples.shape[1])]
    else:
        raise ValueError(f'Unknown pooling mode {mode}')

    return torch.where(seen, pooled, torch.zeros_like(pooled)), counts


def lift_to_points(
    points: torch.Tensor,
    maps: Sequence[torch.Tensor],
    views: Sequence[CameraView],
    mode: PoolingMode,
    tau: float,
    scale_factor: int = ENCODER_SCALE,
    z_near: float = DEFAULT_Z_NEAR,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Bilinear samples of each visible view's map at the projected points, pooled over views."""
    if len(maps) != len(views):
        raise ContractError(f'{len(maps)} feature maps for {len(views)} views')
    if not views:
        raise ContractError('no views to lift from')

    samples: List[torch.Tensor] = []
    masks: List[torch.Tensor] = []
    for data, view in zip(maps, views):
        mask, u, v = visibility_mask(points, view, tau, z_near)
        samples.append(bilinear_sample(data, u / scale_factor, v / scale_factor))
        masks.append(mask)
    return pool(torch.stack(samples), torch.stack(masks), mode)


def aggregate_anchor(
    anchor: torch.Tensor,
    feature_maps: Sequence[FeatureMap],
    views: Sequence[CameraView],
    mode: PoolingMode,
    tau: float = 0.05,
) -> Tuple[torch.Tensor, int]:
    features, counts = lift_to_points(
        torch.as_tensor(anchor, dtype=torch.float64)[None],
        [fm.data for fm in feature_maps],
        views,
        mode,
        tau,
        scale_factor=feature_maps[0].scale_factor if feature_maps else ENCODER_SCALE,
    )
    return features[0], int(counts[0])


def lift_features(
    anchors: AnchorSet,
    views: Sequence[CameraView],
    encoder: Encoder,
    config: FeatureConfig,
    z_near: float = DEFAULT_Z_NEAR,
) -> AnchorSet:
    """Encode every view and pool the feature maps onto the anchors; differentiable in the encoder weights."""
    mask = InputMask.from_config(config)
    half_extent = anchors.normalization.half_extent
    maps = [encoder(stack_inputs(view, half_extent, mask)) for view in views]
    features, counts = lift_to_points(
        anchors.world_positions(), maps, views, config.pooling, config.visibility_tau, z_near=z_near
    )
    logger.debug(f'{int((counts > 0).sum())} of {len(anchors)} anchors visible in at least one view')
    return anchors.with_features(features, counts)


def encode_feature_dump(anchors: AnchorSet) -> bytes:
    """u32 header length, JSON header, then the N×C float32 matrix, all little-endian."""
    matrix = anchors.features.detach().numpy().astype('<f4')
    header = json.dumps(
        {
            'cols': int(matrix.shape[1]),
            'dtype': 'float32',
            'rows': int(matrix.shape[0]),
            'visible_count': anchors.visible_count.tolist(),
        },
        sort_keys=True,
    ).encode('utf8')
    return struct.pack('<I', len(header)) + header + matrix.tobytes()


def decode_feature_dump(payload: bytes) -> Tuple[dict, torch.Tensor]:
    (length,) = struct.unpack_from('<I', payload, 0)
    header = json.loads(payload[4 : 4 + length].decode('utf8'))
    matrix = np.frombuffer(payload[4 + length :], dtype='<f4').reshape(header['rows'], header['cols'])
    return header, torch.from_numpy(matrix.astype(np.float64))
