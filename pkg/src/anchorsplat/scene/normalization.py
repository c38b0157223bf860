from typing import Any, Dict, Tuple

import torch

_MIN_HALF_EXTENT = 1e-6


class SceneNormalization:
    """Maps world points into the normalized cube: p' = (p − center) / half_extent."""

    center: torch.Tensor
    half_extent: float

    def __init__(self, *, center: torch.Tensor, half_extent: float):
        if not half_extent > 0:
            raise ValueError(f'half_extent must be positive, got {half_extent}')
        self.center = torch.as_tensor(center, dtype=torch.float64)
        self.half_extent = float(half_extent)

    def normalize(self, points: torch.Tensor) -> torch.Tensor:
        return (points - self.center) / self.half_extent

    def denormalize(self, points: torch.Tensor) -> torch.Tensor:
        return points * self.half_extent + self.center

    def to_dict(self) -> Dict[str, Any]:
        return {'center': [float(c) for c in self.center], 'half_extent': self.half_extent}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SceneNormalization':
        return cls(center=torch.tensor(data['center'], dtype=torch.float64), half_extent=data['half_extent'])

    def __eq__(self, o: object) -> bool:
        if not isinstance(o, SceneNormalization):
            return False

        return self.to_dict() == o.to_dict()

    def __repr__(self) -> str:
        return f'SceneNormalization(center={self.to_dict()["center"]}, half_extent={self.half_extent})'


def normalize_scene(points: torch.Tensor) -> Tuple[SceneNormalization, torch.Tensor]:
    """Center on the bounding-box midpoint and scale by half the longest axis."""
    if len(points) == 0:
        raise ValueError('cannot normalize an empty point set')

    lo = points.min(dim=0).values
    hi = points.max(dim=0).values
    half_extent = float((hi - lo).max()) / 2.0
    normalization = SceneNormalization(center=(lo + hi) / 2.0, half_extent=max(half_extent, _MIN_HALF_EXTENT))
    # clamp absorbs the last-ulp rounding at the box faces
    return normalization, normalization.normalize(points).clamp(-1.0, 1.0)
