"""
Gaussian refiner.

Render errors of the input views are turned into multi-scale feature maps, lifted onto the Gaussians, mixed by an
attention block, and combined with the current raw attributes and the parent anchor features in Morton-ordered
windowed attention. A zero-initialized head emits additive raw-space updates.
"""
import logging
from typing import List, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.config import PoolingMode, RenderConfig, RunConfig
from anchorsplat.errors import ContractError, PreconditionError
from anchorsplat.features.lift import ENCODER_SCALE, lift_to_points
from anchorsplat.geometry.cameras import DEFAULT_Z_NEAR, CameraView
from anchorsplat.nets.attention import AttentionBlock
from anchorsplat.render.rasterizer import render
from anchorsplat.scene.model import RAW_DIM, GaussianScene

logger = logging.getLogger(__name__)

ERROR_SCALES = (2, 4, 8)
BASE_ERROR_CHANNELS = 3 * len(ERROR_SCALES)
_PROJECTION_SEED = 20240917


def error_projection(error_dim: int) -> torch.Tensor:
    """Fixed error_dim×9 matrix with orthonormal columns."""
    if error_dim < BASE_ERROR_CHANNELS:
        raise ContractError(f'error_dim must be at least {BASE_ERROR_CHANNELS}, got {error_dim}')
    generator = torch.Generator().manual_seed(_PROJECTION_SEED)
    gaussian = torch.randn((error_dim, BASE_ERROR_CHANNELS), generator=generator, dtype=torch.float64)
    q, _ = torch.linalg.qr(gaussian)
    return q


def base_error_channels(rendered: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """(H/4)×(W/4)×9 per-scale RGB differences gt − rendered, pooled at 1/2, 1/4, 1/8 and resized to 1/4."""
    if rendered.shape != gt.shape:
        raise ContractError(f'rendered {tuple(rendered.shape)} and ground truth {tuple(gt.shape)} differ')
    height, width = gt.shape[:2]
    if height % ERROR_SCALES[-1] or width % ERROR_SCALES[-1]:
        raise ContractError(f'image size {height}x{width} is not divisible by {ERROR_SCALES[-1]}')

    target = (height // ENCODER_SCALE, width // ENCODER_SCALE)
    x = rendered.permute(2, 0, 1)[None]
    y = gt.permute(2, 0, 1)[None]
    channels = []
    for factor in ERROR_SCALES:
        diff = F.avg_pool2d(y, factor) - F.avg_pool2d(x, factor)
        channels.append(F.interpolate(diff, size=target, mode='bilinear', align_corners=False))
    return torch.cat(channels, dim=1)[0].permute(1, 2, 0)


def error_features(rendered: torch.Tensor, gt: torch.Tensor, projection: torch.Tensor) -> torch.Tensor:
    return base_error_channels(rendered, gt) @ projection.T


def lift_errors(
    error_maps: Sequence[torch.Tensor],
    scene: GaussianScene,
    views: Sequence[CameraView],
    tau: float,
    z_near: float = DEFAULT_Z_NEAR,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Mean of the error maps sampled at each visible Gaussian center; rows seen by no view are zero."""
    means = scene.normalization.denormalize(scene.means())
    return lift_to_points(means, error_maps, views, PoolingMode.AVERAGE, tau, ENCODER_SCALE, z_near)


def quantize(points: torch.Tensor, bits: int) -> torch.Tensor:
    """Normalized coordinates in [−1, 1] to integer grid cells [0, 2^bits − 1]."""
    cells = 1 << bits
    q = torch.floor((points.detach() + 1.0) * 0.5 * cells).to(torch.long)
    return q.clamp(0, cells - 1)


def morton_codes(cells: torch.Tensor, bits: int) -> torch.Tensor:
    """Interleave integer x, y, z bits as x at 3i+2, y at 3i+1, z at 3i."""
    codes = torch.zeros(cells.shape[0], dtype=torch.long)
    for i in range(bits):
        for axis, shift in ((0, 2), (1, 1), (2, 0)):
            codes |= ((cells[:, axis] >> i) & 1) << (3 * i + shift)
    return codes


def morton_order(points: torch.Tensor, bits: int) -> torch.Tensor:
    return torch.argsort(morton_codes(quantize(points, bits), bits), stable=True)


def parent_index(j: torch.Tensor, per_anchor: int) -> torch.Tensor:
    """Anchor index of Gaussian j (both 0-based)."""
    return torch.div(j, per_anchor, rounding_mode='floor')


class GaussianRefiner(nn.Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        cfg = config.refiner
        self.window = cfg.window
        self.passes = cfg.passes
        self.morton_bits = cfg.morton_bits
        self.error_dim = cfg.error_dim
        self.feature_dim = config.features.dim
        self.register_buffer('projection', error_projection(cfg.error_dim))

        self.error_blocks = nn.ModuleList(
            [AttentionBlock(cfg.error_dim, config.decoder.ffn_mult) for _ in range(cfg.error_blocks)]
        )
        self.embed = nn.Linear(RAW_DIM + config.features.dim + cfg.error_dim, cfg.width, dtype=torch.float64)
        self.serial_blocks = nn.ModuleList(
            [AttentionBlock(cfg.width, config.decoder.ffn_mult) for _ in range(cfg.serial_blocks)]
        )
        self.head = nn.Linear(cfg.width, RAW_DIM, dtype=torch.float64)
        for block in list(self.error_blocks) + list(self.serial_blocks):
            block.zero_residual_branches()
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def error_attention(self, errors: torch.Tensor) -> torch.Tensor:
        for block in self.error_blocks:
            errors = block(errors)
        return errors

    def serialized_update(
        self, scene: GaussianScene, anchor_features: torch.Tensor, errors: torch.Tensor
    ) -> torch.Tensor:
        """Raw-space deltas for every Gaussian from [raw ‖ parent anchor feature ‖ error token]."""
        if errors.shape[0] != len(scene):
            raise ContractError(f'{errors.shape[0]} error tokens for {len(scene)} Gaussians')
        if anchor_features.shape != (len(scene.anchors), self.feature_dim):
            raise ContractError(f'anchor features {tuple(anchor_features.shape)} do not match the refiner')

        parents = parent_index(torch.arange(len(scene)), scene.gaussians_per_anchor)
        tokens = self.embed(torch.cat([scene.raw, anchor_features[parents], errors], dim=1))

        order = morton_order(scene.means(), self.morton_bits)
        tokens = tokens[order]
        for block in self.serial_blocks:
            tokens = block(tokens, window=self.window)
        delta = torch.empty_like(tokens[:, :RAW_DIM])
        # scatter back from serialized order
        return delta.index_copy(0, order, self.head(tokens))

    def step(
        self,
        scene: GaussianScene,
        anchors: AnchorSet,
        views: Sequence[CameraView],
        render_config: RenderConfig,
        tau: float,
        z_near: float,
    ) -> GaussianScene:
        # errors stay differentiable in the scene, only visibility and Morton order are piecewise constant
        maps: List[torch.Tensor] = []
        for view in views:
            rendered = render(scene, view, render_config, z_near=z_near)
            maps.append(error_features(rendered.rgb, view.image, self.projection))
        errors, _ = lift_errors(maps, scene, views, tau, z_near)

        refined_errors = self.error_attention(errors)
        delta = self.serialized_update(scene, anchors.features, refined_errors)
        return scene.with_raw(scene.raw + delta)

    def forward(
        self,
        scene: GaussianScene,
        anchors: AnchorSet,
        views: Sequence[CameraView],
        render_config: RenderConfig,
        tau: float = 0.05,
        z_near: float = DEFAULT_Z_NEAR,
    ) -> GaussianScene:
        if not anchors.populated:
            raise PreconditionError('refinement needs lifted anchor features')
        for i in range(self.passes):
            scene = self.step(scene, anchors, views, render_config, tau, z_near)
            logger.debug(f'Refinement pass {i + 1}/{self.passes} done')
        return scene


def refine(
    scene: GaussianScene, anchors: AnchorSet, views: Sequence[CameraView], refiner: GaussianRefiner, config: RunConfig
) -> GaussianScene:
    return refiner(scene, anchors, views, config.render, config.features.visibility_tau, config.camera.z_near)
