"""
Anchor-aligned Gaussian scene.

Every Gaussian is stored as 14 raw (pre-activation) numbers laid out as RAW_LAYOUT. Gaussians are ordered anchor-major:
rows k·i .. k·i + k − 1 belong to anchor i, for k Gaussians per anchor.
"""
from typing import Dict, NamedTuple, Optional, Tuple

import torch

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.config import GaussianConfig
from anchorsplat.errors import ContractError, NonFiniteAttributeError
from anchorsplat.scene.normalization import SceneNormalization

SH_C0 = 0.28209479177387814

RAW_LAYOUT: Dict[str, Tuple[int, int]] = {
    'offset': (0, 3),
    'opacity': (3, 4),
    'scale': (4, 7),
    'rotation': (7, 11),
    'sh': (11, 14),
}
RAW_DIM = 14

_QUATERNION_EPS = 1e-12


class ActivatedGaussians(NamedTuple):
    offsets: torch.Tensor
    opacities: torch.Tensor
    scales: torch.Tensor
    rotations: torch.Tensor
    sh: torch.Tensor
    degenerate_rotation: torch.Tensor


class WorldGaussians(NamedTuple):
    """Render-ready attributes in world units."""

    means: torch.Tensor
    covariances: torch.Tensor
    opacities: torch.Tensor
    colors: torch.Tensor


def raw_slice(raw: torch.Tensor, name: str) -> torch.Tensor:
    start, stop = RAW_LAYOUT[name]
    return raw[..., start:stop]


def activate(
    raw: torch.Tensor, bound: float, scale_min: float = 1e-4, scale_max: float = 0.5
) -> ActivatedGaussians:
    """Raw parameters (…×14) to constrained attributes; centers are composed separately."""
    if raw.shape[-1] != RAW_DIM:
        raise ContractError(f'raw Gaussian rows must have {RAW_DIM} entries, got {raw.shape[-1]}')

    offsets = bound * torch.tanh(raw_slice(raw, 'offset'))
    opacities = torch.sigmoid(raw_slice(raw, 'opacity'))[..., 0]
    scales = torch.clamp(torch.exp(raw_slice(raw, 'scale')), scale_min, scale_max)

    q = raw_slice(raw, 'rotation')
    norm = torch.linalg.norm(q, dim=-1, keepdim=True)
    degenerate = norm < _QUATERNION_EPS
    identity = torch.zeros_like(q)
    identity[..., 0] = 1.0
    rotations = torch.where(degenerate, identity, q / torch.where(degenerate, torch.ones_like(norm), norm))

    return ActivatedGaussians(
        offsets=offsets,
        opacities=opacities,
        scales=scales,
        rotations=rotations,
        sh=raw_slice(raw, 'sh'),
        degenerate_rotation=degenerate[..., 0],
    )


def compose_center(anchor: torch.Tensor, offset: torch.Tensor) -> torch.Tensor:
    return anchor + offset


def quaternion_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """Unit quaternions (w, x, y, z) to rotation matrices."""
    w, x, y, z = q.unbind(-1)
    rows = [
        1 - 2 * (y * y + z * z),
        2 * (x * y - w * z),
        2 * (x * z + w * y),
        2 * (x * y + w * z),
        1 - 2 * (x * x + z * z),
        2 * (y * z - w * x),
        2 * (x * z - w * y),
        2 * (y * z + w * x),
        1 - 2 * (x * x + y * y),
    ]
    return torch.stack(rows, dim=-1).reshape(q.shape[:-1] + (3, 3))


def covariance(scales: torch.Tensor, rotations: torch.Tensor) -> torch.Tensor:
    """Σ = R(r)·diag(s²)·R(r)ᵀ, batched over leading dimensions."""
    R = quaternion_to_matrix(rotations)
    M = R * scales.unsqueeze(-2)
    return M @ M.transpose(-1, -2)


def sh_to_rgb(sh: torch.Tensor) -> torch.Tensor:
    return torch.clamp(0.5 + SH_C0 * sh, 0.0, 1.0)


def neutral_raw(count: int, config: GaussianConfig) -> torch.Tensor:
    """Raw rows giving centered, half-opaque, gray Gaussians with identity rotation and the initial scale."""
    raw = torch.zeros((count, RAW_DIM), dtype=torch.float64)
    start, stop = RAW_LAYOUT['scale']
    raw[:, start:stop] = float(torch.log(torch.tensor(config.init_scale, dtype=torch.float64)))
    raw[:, RAW_LAYOUT['rotation'][0]] = 1.0
    return raw


class GaussianScene:
    """Immutable scene value: anchors plus k raw Gaussians per anchor."""

    anchors: AnchorSet
    raw: torch.Tensor
    gaussians_per_anchor: int
    offset_bound: float
    scale_min: float
    scale_max: float

    def __init__(
        self,
        *,
        anchors: AnchorSet,
        raw: torch.Tensor,
        gaussians_per_anchor: int,
        offset_bound: float,
        scale_min: float,
        scale_max: float,
    ):
        if raw.dim() != 2 or raw.shape[1] != RAW_DIM:
            raise ContractError(f'raw parameters must be (count, {RAW_DIM}), got {tuple(raw.shape)}')
        if raw.shape[0] != gaussians_per_anchor * len(anchors):
            raise ContractError(
                f'{raw.shape[0]} Gaussians for {len(anchors)} anchors at {gaussians_per_anchor} per anchor'
            )
        self.anchors = anchors
        self.raw = raw
        self.gaussians_per_anchor = gaussians_per_anchor
        self.offset_bound = offset_bound
        self.scale_min = scale_min
        self.scale_max = scale_max

    @classmethod
    def from_config(cls, anchors: AnchorSet, raw: torch.Tensor, config: GaussianConfig) -> 'GaussianScene':
        return cls(
            anchors=anchors,
            raw=raw,
            gaussians_per_anchor=config.per_anchor,
            offset_bound=config.offset_bound,
            scale_min=config.scale_min,
            scale_max=config.scale_max,
        )

    @classmethod
    def neutral(cls, anchors: AnchorSet, config: GaussianConfig) -> 'GaussianScene':
        return cls.from_config(anchors, neutral_raw(config.per_anchor * len(anchors), config), config)

    def __len__(self) -> int:
        return self.raw.shape[0]

    @property
    def num_gs(self) -> int:
        return len(self)

    @property
    def normalization(self) -> SceneNormalization:
        return self.anchors.normalization

    @property
    def anchor_ids(self) -> torch.Tensor:
        return torch.arange(len(self)) // self.gaussians_per_anchor

    def with_raw(self, raw: torch.Tensor) -> 'GaussianScene':
        return GaussianScene(
            anchors=self.anchors,
            raw=raw,
            gaussians_per_anchor=self.gaussians_per_anchor,
            offset_bound=self.offset_bound,
            scale_min=self.scale_min,
            scale_max=self.scale_max,
        )

    def with_anchors(self, anchors: AnchorSet) -> 'GaussianScene':
        return GaussianScene(
            anchors=anchors,
            raw=self.raw,
            gaussians_per_anchor=self.gaussians_per_anchor,
            offset_bound=self.offset_bound,
            scale_min=self.scale_min,
            scale_max=self.scale_max,
        )

    def detach(self) -> 'GaussianScene':
        return self.with_raw(self.raw.detach())

    def activated(self) -> ActivatedGaussians:
        return activate(self.raw, self.offset_bound, self.scale_min, self.scale_max)

    def means(self, activated: Optional[ActivatedGaussians] = None) -> torch.Tensor:
        """Gaussian centers in normalized units."""
        act = activated if activated is not None else self.activated()
        return compose_center(self.anchors.positions[self.anchor_ids], act.offsets)

    def check_finite(self):
        bad = ~torch.isfinite(self.raw)
        if bool(bad.any()):
            row, col = (int(i) for i in bad.nonzero()[0])
            attribute = next(name for name, (start, stop) in RAW_LAYOUT.items() if start <= col < stop)
            raise NonFiniteAttributeError(row, attribute)

    def world(self) -> WorldGaussians:
        """Denormalized render attributes; gradients flow back to the raw parameters."""
        act = self.activated()
        h = self.normalization.half_extent
        return WorldGaussians(
            means=self.normalization.denormalize(self.means(act)),
            covariances=covariance(act.scales * h, act.rotations),
            opacities=act.opacities,
            colors=sh_to_rgb(act.sh),
        )
