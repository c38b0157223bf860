"""Rendering, depth and regularization losses; every function is differentiable in its first argument."""
from typing import Dict, List, Sequence

import torch
import torch.nn.functional as F

from anchorsplat.config import LossWeights
from anchorsplat.errors import ContractError
from anchorsplat.geometry.cameras import CameraView
from anchorsplat.render.rasterizer import RenderOutput
from anchorsplat.scene.model import GaussianScene

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5

# fixed summation order of the breakdown
LOSS_TERMS = ('image', 'depth', 'opacity', 'scale')


def _same_shape(x: torch.Tensor, y: torch.Tensor):
    if x.shape != y.shape:
        raise ContractError(f'shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}')


def _gaussian_window(size: int, sigma: float, dtype: torch.dtype) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return g[:, None] * g[None, :]


def ssim(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Single-scale SSIM of H×W×3 images, Gaussian window (valid positions only), averaged over channels."""
    _same_shape(x, y)
    height, width = x.shape[:2]
    size = min(SSIM_WINDOW, height, width)
    channels = x.shape[2]
    window = _gaussian_window(size, SSIM_SIGMA, x.dtype).expand(channels, 1, size, size)

    def filt(img: torch.Tensor) -> torch.Tensor:
        return F.conv2d(img, window, groups=channels)

    a = x.permute(2, 0, 1)[None]
    b = y.permute(2, 0, 1)[None]
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b

    numerator = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return (numerator / denominator).mean()


def l1(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    _same_shape(x, y)
    return (x - y).abs().mean()


def render_loss(rendered: torch.Tensor, target: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """ℓ1 + γ_SSIM·(1 − SSIM); the perceptual term is not computed."""
    return l1(rendered, target) + weights.ssim * (1.0 - ssim(rendered, target))


def depth_loss(
    rendered_depth: torch.Tensor, alpha: torch.Tensor, target_depth: torch.Tensor, alpha_threshold: float = 0.5
) -> torch.Tensor:
    """Mean |D̂ − D| over pixels with valid ground truth and rendered alpha above the threshold; 0 if none."""
    _same_shape(rendered_depth, target_depth)
    mask = (target_depth > 0) & (alpha.detach() > alpha_threshold)
    if not bool(mask.any()):
        return rendered_depth.sum() * 0.0
    return (rendered_depth[mask] - target_depth[mask]).abs().mean()


def opacity_reg(opacities: torch.Tensor) -> torch.Tensor:
    return (1.0 - opacities).mean()


def scale_reg(scales: torch.Tensor) -> torch.Tensor:
    return scales.prod(dim=-1).mean()


def total_loss(
    renders: Sequence[RenderOutput],
    views: Sequence[CameraView],
    scene: GaussianScene,
    weights: LossWeights,
) -> Dict[str, torch.Tensor]:
    """
    λ_I Σ ℓ_I + λ_D Σ ℓ1(D̂, D) + λ_α ℓ_α + λ_s ℓ_s.

    Returns the weighted terms plus 'total', their sum in LOSS_TERMS order.

    Both depth maps are divided by the scene half_extent before the ℓ1, so the depth term is in normalized scene units
    and the default λ_D = 100 weighs it the same for every scene scale. In world units the effective weight is
    λ_D / half_extent.
    """
    if len(renders) != len(views):
        raise ContractError(f'{len(renders)} renders for {len(views)} views')

    h = scene.normalization.half_extent
    image_terms: List[torch.Tensor] = []
    depth_terms: List[torch.Tensor] = []
    for output, view in zip(renders, views):
        image_terms.append(render_loss(output.rgb, view.image, weights))
        depth_terms.append(
            depth_loss(output.depth / h, output.alpha, view.depth / h, weights.depth_alpha_threshold)
        )

    act = scene.activated()
    terms = {
        'image': weights.image * torch.stack(image_terms).sum(),
        'depth': weights.depth * torch.stack(depth_terms).sum(),
        'opacity': weights.opacity * opacity_reg(act.opacities),
        'scale': weights.scale * scale_reg(act.scales),
    }
    total = terms[LOSS_TERMS[0]]
    for name in LOSS_TERMS[1:]:
        total = total + terms[name]
    terms['total'] = total
    return terms


def image_loss(renders: Sequence[RenderOutput], views: Sequence[CameraView], weights: LossWeights) -> torch.Tensor:
    """λ_I Σ ℓ_I alone, the stage-two objective."""
    return weights.image * torch.stack([render_loss(o.rgb, v.image, weights) for o, v in zip(renders, views)]).sum()
