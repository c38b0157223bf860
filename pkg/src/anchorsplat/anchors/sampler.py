"""Dense back-projected points to a sparse anchor set: clip, normalize, voxel budget, farthest point sampling."""
import logging
import math
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

import torch

from anchorsplat.config import RunConfig
from anchorsplat.errors import (
    ContractError,
    EmptyAnchorError,
    InvalidBoundsError,
    InvalidBudgetError,
    PreconditionError,
)
from anchorsplat.geometry.cameras import CameraView, backproject_views
from anchorsplat.scene.normalization import SceneNormalization, normalize_scene

logger = logging.getLogger(__name__)

_DEGENERATE_EPS = 1e-6


class ClipBounds:
    """Closed axis-aligned box in world units."""

    min: torch.Tensor
    max: torch.Tensor

    def __init__(self, *, min: torch.Tensor, max: torch.Tensor):
        lo = torch.as_tensor(min, dtype=torch.float64)
        hi = torch.as_tensor(max, dtype=torch.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise InvalidBoundsError('corners must be 3-vectors')
        if not bool((lo < hi).all()):
            raise InvalidBoundsError(f'min {lo.tolist()} is not below max {hi.tolist()}')
        self.min = lo
        self.max = hi

    def contains(self, points: torch.Tensor) -> torch.Tensor:
        return ((points >= self.min) & (points <= self.max)).all(dim=-1)

    def to_dict(self) -> Dict[str, Any]:
        return {'min': self.min.tolist(), 'max': self.max.tolist()}


class AnchorSet:
    """Anchor positions in normalized scene units, with per-anchor features once lifted."""

    positions: torch.Tensor
    features: torch.Tensor
    visible_count: torch.Tensor
    source_count: int
    normalization: SceneNormalization
    voxel_size: float
    seed_index: int
    populated: bool

    def __init__(
        self,
        *,
        positions: torch.Tensor,
        source_count: int,
        normalization: SceneNormalization,
        feature_dim: int,
        voxel_size: float,
        seed_index: int,
        features: Optional[torch.Tensor] = None,
        visible_count: Optional[torch.Tensor] = None,
    ):
        n = len(positions)
        if n < 1:
            raise EmptyAnchorError(source_count)
        if n > source_count:
            raise ContractError(f'{n} anchors exceed the {source_count} source points')

        self.positions = positions
        self.source_count = source_count
        self.normalization = normalization
        self.voxel_size = voxel_size
        self.seed_index = seed_index
        self.populated = features is not None
        self.features = features if features is not None else torch.zeros((n, feature_dim), dtype=torch.float64)
        self.visible_count = (
            visible_count if visible_count is not None else torch.zeros(n, dtype=torch.long)
        )
        if self.features.shape[0] != n:
            raise ContractError(f'{self.features.shape[0]} feature rows for {n} anchors')

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def world_positions(self) -> torch.Tensor:
        return self.normalization.denormalize(self.positions)

    def with_features(self, features: torch.Tensor, visible_count: torch.Tensor) -> 'AnchorSet':
        return AnchorSet(
            positions=self.positions,
            source_count=self.source_count,
            normalization=self.normalization,
            feature_dim=features.shape[1],
            voxel_size=self.voxel_size,
            seed_index=self.seed_index,
            features=features,
            visible_count=visible_count,
        )

    def permute(self, order: torch.Tensor) -> 'AnchorSet':
        return AnchorSet(
            positions=self.positions[order],
            source_count=self.source_count,
            normalization=self.normalization,
            feature_dim=self.feature_dim,
            voxel_size=self.voxel_size,
            seed_index=self.seed_index,
            features=self.features[order] if self.populated else None,
            visible_count=self.visible_count[order],
        )

    def sidecar(self) -> Dict[str, Any]:
        return {
            'anchor_count': len(self),
            'normalization': self.normalization.to_dict(),
            'seed': self.seed_index,
            'source_count': self.source_count,
            'voxel_size': self.voxel_size,
        }


def _nearest_rank_index(p: float, n: int) -> int:
    # 1-based rank ceil(p·n), tolerant to representation error in p·n
    rank = math.ceil(p * n - 1e-9)
    return min(max(rank, 1), n) - 1


def robust_bounds(points: torch.Tensor, lo_pct: float = 0.01, hi_pct: float = 0.99, margin: float = 0.05) -> ClipBounds:
    """Per-axis nearest-rank percentile box, widened by margin × axis extent on both sides."""
    if len(points) < 2:
        raise PreconditionError(f'robust bounds need at least 2 points, got {len(points)}')
    if not 0 <= lo_pct < hi_pct <= 1:
        raise InvalidBoundsError(f'percentiles must satisfy 0 <= lo < hi <= 1, got {lo_pct}, {hi_pct}')
    if margin < 0:
        raise InvalidBoundsError(f'margin must be non-negative, got {margin}')

    ordered = torch.sort(points, dim=0).values
    lo = ordered[_nearest_rank_index(lo_pct, len(points))]
    hi = ordered[_nearest_rank_index(hi_pct, len(points))]
    extent = hi - lo
    pad = torch.where(extent > 0, margin * extent, torch.full_like(extent, _DEGENERATE_EPS))
    return ClipBounds(min=lo - pad, max=hi + pad)


def clip_points(points: torch.Tensor, bounds: ClipBounds) -> Tuple[torch.Tensor, int]:
    kept = points[bounds.contains(points)]
    if len(kept) == 0:
        raise EmptyAnchorError(len(points))
    return kept, len(kept)


def voxel_budget(points: torch.Tensor, voxel_size: float, cap: int, origin: Optional[torch.Tensor] = None) -> int:
    """min(cap, number of distinct occupied voxels)."""
    if voxel_size <= 0:
        raise ValueError(f'voxel_size must be positive, got {voxel_size}')
    if cap < 1:
        raise ValueError(f'cap must be at least 1, got {cap}')
    if len(points) == 0:
        return 0

    if origin is None:
        origin = torch.zeros(3, dtype=points.dtype)
    cells = torch.floor((points - origin) / voxel_size).to(torch.long)
    occupied = len(torch.unique(cells, dim=0))
    return min(cap, occupied)


def centroid_seed(points: torch.Tensor) -> int:
    d2 = ((points - points.mean(dim=0)) ** 2).sum(dim=1)
    return int(torch.argmin(d2))


def fps(points: torch.Tensor, k: int, seed_index: int) -> torch.Tensor:
    """
    Exact farthest point sampling.

    Starts at seed_index and repeatedly takes the point with the largest squared distance to the selected set, lowest
    index first on ties. Returns indices in selection order.
    """
    n = len(points)
    if k < 1 or k > n:
        raise InvalidBudgetError(k, n)
    if not 0 <= seed_index < n:
        raise ContractError(f'FPS seed index {seed_index} outside [0, {n})')

    selected = torch.empty(k, dtype=torch.long)
    selected[0] = seed_index
    min_d2 = ((points - points[seed_index]) ** 2).sum(dim=1)
    min_d2[seed_index] = -1.0
    for i in range(1, k):
        # argmax returns the first maximal index
        idx = int(torch.argmax(min_d2))
        selected[i] = idx
        min_d2 = torch.minimum(min_d2, ((points - points[idx]) ** 2).sum(dim=1))
        min_d2[idx] = -1.0
    return selected


class _Cloud(NamedTuple):
    source_count: int
    kept_count: int
    normalization: SceneNormalization
    points: torch.Tensor
    # clip box minimum in normalized units, the voxel grid origin
    origin: torch.Tensor


def _normalized_cloud(views: Sequence[CameraView], config: RunConfig) -> _Cloud:
    cfg = config.anchors
    points = backproject_views([view for view in views if view.has_valid_depth], cfg.stride)
    if len(points) == 0:
        raise EmptyAnchorError(0)

    bounds = robust_bounds(points, cfg.clip_lo_pct, cfg.clip_hi_pct, cfg.clip_margin)
    kept, kept_count = clip_points(points, bounds)
    normalization, normalized = normalize_scene(kept)
    return _Cloud(
        source_count=len(points),
        kept_count=kept_count,
        normalization=normalization,
        points=normalized,
        origin=normalization.normalize(bounds.min),
    )


def _budget(cloud: _Cloud, config: RunConfig) -> int:
    cfg = config.anchors
    if cfg.budget is not None:
        return min(cfg.budget, cloud.kept_count)
    return voxel_budget(cloud.points, cfg.effective_voxel_size, cfg.cap, origin=cloud.origin)


def anchor_budget(views: Sequence[CameraView], config: RunConfig) -> int:
    """Number of anchors build_anchors would place for these views."""
    return _budget(_normalized_cloud(views, config), config)


def build_anchors(views: Sequence[CameraView], config: RunConfig) -> AnchorSet:
    cfg = config.anchors
    cloud = _normalized_cloud(views, config)
    budget = _budget(cloud, config)

    seed_index = cfg.fps_seed_index if cfg.fps_seed_index is not None else centroid_seed(cloud.points)
    indices = fps(cloud.points, budget, seed_index)
    logger.debug(f'{cloud.source_count} points, {cloud.kept_count} after clipping, {budget} anchors')

    return AnchorSet(
        positions=cloud.points[indices],
        source_count=cloud.source_count,
        normalization=cloud.normalization,
        feature_dim=config.features.dim,
        voxel_size=cfg.effective_voxel_size,
        seed_index=seed_index,
    )
