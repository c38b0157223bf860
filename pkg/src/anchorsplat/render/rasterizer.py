"""
Tile-based differentiable Gaussian splatting on the CPU.

Gaussians are projected with the local perspective Jacobian, binned into square tiles, depth-sorted per tile and
alpha-composited front to back at integer pixel coordinates. The whole forward pass is a torch graph: the backward
pass is its exact reverse, including the activation chain of the scene parameters.

Every tile reads one slice of a single gather and writes one slice of a single concatenation, so gradient sums happen
in a fixed order regardless of how many workers render tiles.
"""
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence

import torch

from anchorsplat.config import RenderConfig
from anchorsplat.errors import ContractError
from anchorsplat.geometry.cameras import DEFAULT_Z_NEAR, CameraView, Intrinsics, Extrinsics
from anchorsplat.scene.model import RAW_LAYOUT, GaussianScene, WorldGaussians
from anchorsplat.utils.runtime import ordered_map

logger = logging.getLogger(__name__)

# smallest weight a tile must not miss; sets the binning radius
_COVERAGE_EPS = 1e-8
_DEPTH_EPS = 1e-8


class Splat2D(NamedTuple):
    mean2d: torch.Tensor
    cov2d: torch.Tensor
    depth: torch.Tensor
    color: torch.Tensor
    opacity: torch.Tensor
    gaussian_id: int


class ProjectedSplats(NamedTuple):
    """Batched projection of every Gaussian of a scene into one camera."""

    means2d: torch.Tensor
    cov2d: torch.Tensor
    conics: torch.Tensor
    depths: torch.Tensor
    culled: torch.Tensor


class RenderOutput(NamedTuple):
    rgb: torch.Tensor
    depth: torch.Tensor
    alpha: torch.Tensor
    tile_counts: torch.Tensor


def project_splats(
    means: torch.Tensor,
    covariances: torch.Tensor,
    K: Intrinsics,
    E: Extrinsics,
    lowpass: float = 0.3,
    z_near: float = DEFAULT_Z_NEAR,
) -> ProjectedSplats:
    """EWA projection: cov2d = J·Rᵀ·Σ·R·Jᵀ + lowpass·I, culled behind the camera or outside the image."""
    p_cam = (means - E.T) @ E.R
    z = p_cam[:, 2]
    behind = z <= z_near
    safe_z = torch.where(behind, torch.ones_like(z), z)
    x, y = p_cam[:, 0], p_cam[:, 1]

    u = K.fx * x / safe_z + K.cx
    v = K.fy * y / safe_z + K.cy
    zeros = torch.zeros_like(z)
    J = torch.stack(
        [
            torch.stack([K.fx / safe_z, zeros, -K.fx * x / safe_z ** 2], dim=-1),
            torch.stack([zeros, K.fy / safe_z, -K.fy * y / safe_z ** 2], dim=-1),
        ],
        dim=-2,
    )
    cov_cam = E.R.T @ covariances @ E.R
    cov2d = J @ cov_cam @ J.transpose(-1, -2) + lowpass * torch.eye(2, dtype=means.dtype)

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conics = torch.stack([c / det, -b / det, a / det], dim=-1)

    with torch.no_grad():
        # axis-aligned box of the 3-sigma ellipse
        half_u = 3.0 * torch.sqrt(a.clamp(min=0))
        half_v = 3.0 * torch.sqrt(c.clamp(min=0))
        outside = (u + half_u < 0) | (u - half_u > K.width - 1) | (v + half_v < 0) | (v - half_v > K.height - 1)
        culled = behind | outside | ~(det > 0)

    return ProjectedSplats(means2d=torch.stack([u, v], dim=-1), cov2d=cov2d, conics=conics, depths=z, culled=culled)


def project_gaussian(
    mean: torch.Tensor,
    cov: torch.Tensor,
    color: torch.Tensor,
    opacity: torch.Tensor,
    view: CameraView,
    gaussian_id: int = 0,
    lowpass: float = 0.3,
    z_near: float = DEFAULT_Z_NEAR,
) -> Optional[Splat2D]:
    """Single world-space Gaussian to a splat, or None when culled."""
    projected = project_splats(mean[None], cov[None], view.intrinsics, view.extrinsics, lowpass, z_near)
    if bool(projected.culled[0]):
        return None
    return Splat2D(
        mean2d=projected.means2d[0],
        cov2d=projected.cov2d[0],
        depth=projected.depths[0],
        color=color,
        opacity=opacity,
        gaussian_id=gaussian_id,
    )


def _coverage_radius(cov2d: torch.Tensor, opacities: torch.Tensor) -> torch.Tensor:
    """Pixel radius beyond which a splat's weight drops below the coverage epsilon; −1 if it never reaches it."""
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    mid = 0.5 * (a + c)
    lambda_max = mid + torch.sqrt(torch.clamp(mid * mid - (a * c - b * b), min=0.0))
    ratio = torch.log(opacities / _COVERAGE_EPS)
    radius = torch.sqrt(2.0 * lambda_max * ratio.clamp(min=0.0))
    return torch.where(ratio > 0, radius, torch.full_like(radius, -1.0))


class _TileGrid:
    def __init__(self, width: int, height: int, tile_size: int):
        self.width = width
        self.height = height
        self.tile_size = tile_size
        self.tiles_x = math.ceil(width / tile_size)
        self.tiles_y = math.ceil(height / tile_size)

    def __len__(self) -> int:
        return self.tiles_x * self.tiles_y

    def pixels(self, tile: int) -> torch.Tensor:
        """Flat raster indices of the pixels in a tile, row-major."""
        ty, tx = divmod(tile, self.tiles_x)
        ys = torch.arange(ty * self.tile_size, min((ty + 1) * self.tile_size, self.height))
        xs = torch.arange(tx * self.tile_size, min((tx + 1) * self.tile_size, self.width))
        return (ys[:, None] * self.width + xs[None, :]).reshape(-1)

    def bin(self, means2d: torch.Tensor, radius: torch.Tensor, live: torch.Tensor) -> List[torch.Tensor]:
        """Splat ids overlapping each tile, ascending."""
        ts = self.tile_size
        u, v = means2d[:, 0], means2d[:, 1]
        x0 = torch.floor((u - radius) / ts).clamp(0, self.tiles_x - 1)
        x1 = torch.floor((u + radius) / ts).clamp(0, self.tiles_x - 1)
        y0 = torch.floor((v - radius) / ts).clamp(0, self.tiles_y - 1)
        y1 = torch.floor((v + radius) / ts).clamp(0, self.tiles_y - 1)
        # a splat whose disc lies entirely off one side of the grid must not be clamped back onto it
        on_grid = (
            live
            & (radius >= 0)
            & (u + radius >= 0)
            & (v + radius >= 0)
            & (u - radius < self.tiles_x * ts)
            & (v - radius < self.tiles_y * ts)
        )

        tx = torch.arange(self.tiles_x, dtype=means2d.dtype)
        ty = torch.arange(self.tiles_y, dtype=means2d.dtype)
        in_x = (tx[:, None] >= x0[None, :]) & (tx[:, None] <= x1[None, :])
        in_y = (ty[:, None] >= y0[None, :]) & (ty[:, None] <= y1[None, :])
        bins = []
        for j in range(self.tiles_y):
            for i in range(self.tiles_x):
                bins.append(torch.nonzero(in_y[j] & in_x[i] & on_grid).reshape(-1))
        return bins


def _composite_tile(
    pixels: torch.Tensor,
    width: int,
    splats: torch.Tensor,
    background: torch.Tensor,
    alpha_max: float,
    transmittance_min: float,
) -> torch.Tensor:
    """Front-to-back compositing of depth-sorted splats (G×10) at P pixels; returns P×5 (rgb, alpha, depth)."""
    ys = torch.div(pixels, width, rounding_mode='floor').to(splats.dtype)
    xs = (pixels % width).to(splats.dtype)

    dx = xs[:, None] - splats[None, :, 0]
    dy = ys[:, None] - splats[None, :, 1]
    conic_a, conic_b, conic_c = splats[:, 2], splats[:, 3], splats[:, 4]
    power = -0.5 * (conic_a * dx * dx + conic_c * dy * dy) - conic_b * dx * dy
    w = torch.clamp(splats[:, 6] * torch.exp(power), max=alpha_max)

    survive = torch.cumprod(1.0 - w, dim=1)
    t_excl = torch.cat([torch.ones_like(survive[:, :1]), survive[:, :-1]], dim=1)
    # transmittance is non-increasing, so the mask keeps a prefix of the sorted list
    keep = (t_excl.detach() >= transmittance_min).to(w.dtype)
    contrib = w * t_excl * keep

    alpha = contrib.sum(dim=1)
    rgb = contrib @ splats[:, 7:10] + (1.0 - alpha)[:, None] * background
    depth = (contrib @ splats[:, 5]) / torch.clamp(alpha, min=_DEPTH_EPS)
    return torch.cat([rgb, alpha[:, None], depth[:, None]], dim=1)


def rasterize(
    world: WorldGaussians,
    K: Intrinsics,
    E: Extrinsics,
    background: Sequence[float],
    config: RenderConfig,
    z_near: float = DEFAULT_Z_NEAR,
) -> RenderOutput:
    dtype = world.means.dtype
    bg = torch.as_tensor(background, dtype=dtype)
    projected = project_splats(world.means, world.covariances, K, E, config.lowpass, z_near)

    grid = _TileGrid(K.width, K.height, config.tile_size)
    with torch.no_grad():
        radius = _coverage_radius(projected.cov2d, world.opacities)
        bins = grid.bin(projected.means2d, radius, ~projected.culled)
        depths = projected.depths.detach()
        # stable sort of id-ordered bins: depth ascending, ties by gaussian id
        bins = [ids[torch.argsort(depths[ids], stable=True)] for ids in bins]

    table = torch.cat(
        [
            projected.means2d,
            projected.conics,
            projected.depths[:, None],
            world.opacities[:, None],
            world.colors,
        ],
        dim=1,
    )
    chunks = torch.split(table[torch.cat(bins)], [len(ids) for ids in bins])

    empty_row = torch.cat([bg, torch.zeros(2, dtype=dtype)])
    grad_enabled = torch.is_grad_enabled()

    def render_tile(tile: int) -> torch.Tensor:
        pixels = grid.pixels(tile)
        if len(bins[tile]) == 0:
            return empty_row.expand(len(pixels), -1)
        with torch.set_grad_enabled(grad_enabled):
            return _composite_tile(
                pixels, K.width, chunks[tile], bg, config.alpha_max, config.transmittance_min
            )

    tiles = ordered_map(render_tile, range(len(grid)))
    order = torch.cat([grid.pixels(tile) for tile in range(len(grid))])
    flat = torch.zeros((K.width * K.height, 5), dtype=dtype).index_copy(0, order, torch.cat(tiles))
    image = flat.reshape(K.height, K.width, 5)

    counts = torch.tensor([len(ids) for ids in bins], dtype=torch.long).reshape(grid.tiles_y, grid.tiles_x)
    return RenderOutput(rgb=image[..., :3], alpha=image[..., 3], depth=image[..., 4], tile_counts=counts)


def render(
    scene: GaussianScene,
    view: CameraView,
    config: Optional[RenderConfig] = None,
    background: Optional[Sequence[float]] = None,
    z_near: float = DEFAULT_Z_NEAR,
) -> RenderOutput:
    config = config or RenderConfig()
    scene.check_finite()
    bg = background if background is not None else config.background
    return rasterize(scene.world(), view.intrinsics, view.extrinsics, bg, config, z_near)


def render_backward(
    scene: GaussianScene,
    output: RenderOutput,
    grad_rgb: torch.Tensor,
    grad_depth: torch.Tensor,
    grad_alpha: Optional[torch.Tensor] = None,
) -> Dict[str, torch.Tensor]:
    """
    Gradients of the raw Gaussian parameters given upstream image gradients.

    `output` must come from render() on `scene` with gradients enabled and `scene.raw` requiring grad.
    """
    if tuple(grad_rgb.shape) != tuple(output.rgb.shape):
        raise ContractError(f'grad_rgb shape {tuple(grad_rgb.shape)} does not match {tuple(output.rgb.shape)}')
    if tuple(grad_depth.shape) != tuple(output.depth.shape):
        raise ContractError(f'grad_depth shape {tuple(grad_depth.shape)} does not match {tuple(output.depth.shape)}')
    if grad_alpha is not None and tuple(grad_alpha.shape) != tuple(output.alpha.shape):
        raise ContractError(f'grad_alpha shape {tuple(grad_alpha.shape)} does not match {tuple(output.alpha.shape)}')
    if not scene.raw.requires_grad:
        raise ContractError('scene parameters do not require grad')
    if output.rgb.grad_fn is None:
        # nothing was composited, every Gaussian was culled
        return {name: torch.zeros_like(scene.raw[:, start:stop]) for name, (start, stop) in RAW_LAYOUT.items()}

    outputs = [output.rgb, output.depth]
    grads = [grad_rgb.to(output.rgb.dtype), grad_depth.to(output.depth.dtype)]
    if grad_alpha is not None:
        outputs.append(output.alpha)
        grads.append(grad_alpha.to(output.alpha.dtype))

    (grad_raw,) = torch.autograd.grad(outputs, [scene.raw], grads, retain_graph=True, allow_unused=True)
    if grad_raw is None:
        grad_raw = torch.zeros_like(scene.raw)
    return {name: grad_raw[:, start:stop] for name, (start, stop) in RAW_LAYOUT.items()}


def tile_report(output: RenderOutput, tile_size: int) -> Dict[str, object]:
    counts = output.tile_counts
    return {
        'tile_size': tile_size,
        'tiles_x': int(counts.shape[1]),
        'tiles_y': int(counts.shape[0]),
        'counts': counts.tolist(),
    }
