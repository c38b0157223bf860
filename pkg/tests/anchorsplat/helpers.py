"""Small scenes, cameras and configs shared by the unit tests."""
from typing import Any, Callable, Dict, Optional, Sequence

import torch
from torch import nn

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.config import RunConfig
from anchorsplat.geometry.cameras import CameraView, Extrinsics, Intrinsics
from anchorsplat.scene.normalization import SceneNormalization

TINY_SECTIONS: Dict[str, Dict[str, Any]] = {
    'anchors': {'cap': 24, 'voxel_divisions': 8, 'stride': 2},
    'gaussians': {'per_anchor': 2},
    'render': {'tile_size': 8},
    'features': {'dim': 8},
    'decoder': {'width': 16, 'blocks': 1},
    'refiner': {'error_dim': 12, 'width': 16, 'error_blocks': 1, 'serial_blocks': 1, 'window': 8},
    'optim': {
        'stage1_steps': 3,
        'stage2_steps': 2,
        'views_per_step': 1,
        'checkpoint_every': 2,
        'fit_steps': 3,
    },
}


def tiny_config(**sections: Any) -> RunConfig:
    """Config small enough to train and render in a unit test."""
    return RunConfig.parse_obj(TINY_SECTIONS).evolve(**sections)


def intrinsics(width: int = 16, height: int = 12, focal: float = 10.0) -> Intrinsics:
    return Intrinsics(fx=focal, fy=focal, cx=width / 2, cy=height / 2, width=width, height=height)


def checker_image(width: int, height: int) -> torch.Tensor:
    v, u = torch.meshgrid(torch.arange(height), torch.arange(width), indexing='ij')
    parity = ((u // 2 + v // 2) % 2).to(torch.float64)
    return torch.stack([0.2 + 0.6 * parity, 0.5 * torch.ones_like(parity), 0.8 - 0.6 * parity], dim=-1)


def plane_view(
    name: str = 'view',
    depth: float = 2.0,
    width: int = 16,
    height: int = 12,
    extrinsics: Optional[Extrinsics] = None,
    split: str = 'input',
) -> CameraView:
    """Camera facing a fronto-parallel textured plane at constant depth."""
    return CameraView(
        image=checker_image(width, height),
        depth=torch.full((height, width), depth, dtype=torch.float64),
        intrinsics=intrinsics(width, height),
        extrinsics=extrinsics if extrinsics is not None else Extrinsics.identity(),
        name=name,
        split=split,
    )


def anchor_set(positions, center=(0.0, 0.0, 0.0), half_extent: float = 1.0, feature_dim: int = 0) -> AnchorSet:
    positions = torch.as_tensor(positions, dtype=torch.float64)
    return AnchorSet(
        positions=positions,
        source_count=max(len(positions), 1) * 10,
        normalization=SceneNormalization(center=torch.tensor(center, dtype=torch.float64), half_extent=half_extent),
        feature_dim=feature_dim,
        voxel_size=0.25,
        seed_index=0,
    )


def perturb_parameters(module: nn.Module, std: float, seed: int = 0):
    """Add seeded Gaussian noise to every parameter, so zero-initialized layers pass gradients upstream."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for parameter in module.parameters():
            parameter.add_(std * torch.randn(parameter.shape, generator=generator, dtype=parameter.dtype))


def assert_gradients_match(
    loss_fn: Callable[[], torch.Tensor],
    tensors: Sequence[torch.Tensor],
    samples: int = 6,
    eps: float = 1e-6,
    rtol: float = 2e-3,
    atol: float = 1e-6,
    seed: int = 0,
) -> int:
    """
    Compare autograd gradients of a scalar loss with central differences.

    Every tensor must be a float64 leaf. Its gradient must be nonzero somewhere, and at `samples` random entries it
    must agree with (f(x + eps) − f(x − eps)) / 2eps. Returns the number of entries compared.
    """
    for tensor in tensors:
        tensor.grad = None
    loss_fn().backward()
    analytic = [torch.zeros_like(t) if t.grad is None else t.grad.detach().clone() for t in tensors]

    generator = torch.Generator().manual_seed(seed)
    compared = 0
    for number, (tensor, grad) in enumerate(zip(tensors, analytic)):
        assert float(grad.abs().max()) > 0.0, f'tensor {number} {tuple(tensor.shape)} receives no gradient'
        flat = tensor.data.view(-1)
        for index in torch.randperm(flat.numel(), generator=generator)[:samples].tolist():
            original = float(flat[index])
            with torch.no_grad():
                flat[index] = original + eps
                plus = float(loss_fn())
                flat[index] = original - eps
                minus = float(loss_fn())
                flat[index] = original
            numeric = (plus - minus) / (2 * eps)
            expected = float(grad.reshape(-1)[index])
            tolerance = atol + rtol * max(abs(numeric), abs(expected))
            assert abs(numeric - expected) <= tolerance, f'tensor {number} entry {index}: {expected} vs {numeric}'
            compared += 1
    return compared
