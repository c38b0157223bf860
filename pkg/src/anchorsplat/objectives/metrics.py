import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Union

import torch
from pydantic import BaseModel, Field

from anchorsplat.errors import NumericError, UndefinedMetricError
from anchorsplat.objectives.losses import ssim

logger = logging.getLogger(__name__)

DELTA1_THRESHOLD = 1.25
INF_SENTINEL = 'inf'


def psnr(x: torch.Tensor, y: torch.Tensor) -> float:
    """10·log10(1 / MSE) in dB; identical images give +inf."""
    mse = float(((x - y) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _masked(pred: torch.Tensor, target: torch.Tensor, mask: Optional[torch.Tensor], metric: str):
    if mask is None:
        mask = target > 0
    mask = mask & (target > 0)
    if not bool(mask.any()):
        raise UndefinedMetricError(metric)
    return pred[mask], target[mask]


def absrel(pred: torch.Tensor, target: torch.Tensor, mask: Optional[torch.Tensor] = None) -> float:
    p, t = _masked(pred, target, mask, 'AbsRel')
    return float(((p - t).abs() / t).mean())


def delta1(pred: torch.Tensor, target: torch.Tensor, mask: Optional[torch.Tensor] = None) -> float:
    p, t = _masked(pred, target, mask, 'delta1')
    # a zero prediction has an infinite ratio and fails the threshold
    ratio = torch.maximum(p / t, t / p.clamp(min=1e-300))
    return float((ratio < DELTA1_THRESHOLD).to(torch.float64).mean())


def serialize_metric(value: float) -> Union[float, str]:
    return INF_SENTINEL if math.isinf(value) and value > 0 else value


def parse_metric(value: Union[float, str]) -> float:
    return math.inf if value == INF_SENTINEL else float(value)


class ViewMetrics(BaseModel):
    name: str
    psnr: float
    ssim: float = Field(..., ge=-1, le=1)
    absrel: float = Field(..., ge=0)
    delta1: float = Field(..., ge=0, le=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'absrel': self.absrel,
            'delta1': self.delta1,
            'name': self.name,
            'psnr': serialize_metric(self.psnr),
            'ssim': self.ssim,
        }


class MetricsReport(BaseModel):
    psnr: float
    ssim: float = Field(..., ge=-1, le=1)
    absrel: float = Field(..., ge=0)
    delta1: float = Field(..., ge=0, le=1)
    num_gs: int = Field(..., ge=0)
    recon_time_s: float = Field(..., ge=0)
    views: List[ViewMetrics]

    @classmethod
    def from_views(cls, views: Sequence[ViewMetrics], num_gs: int, recon_time_s: float) -> 'MetricsReport':
        """Aggregate is the plain mean of per-view values; a single infinite PSNR makes the mean infinite."""
        n = len(views)
        return cls(
            psnr=sum(v.psnr for v in views) / n,
            ssim=sum(v.ssim for v in views) / n,
            absrel=sum(v.absrel for v in views) / n,
            delta1=sum(v.delta1 for v in views) / n,
            num_gs=num_gs,
            recon_time_s=recon_time_s,
            views=list(views),
        )

    def has_nan(self) -> bool:
        values = [self.psnr, self.ssim, self.absrel, self.delta1]
        values += [x for v in self.views for x in (v.psnr, v.ssim, v.absrel, v.delta1)]
        return any(math.isnan(x) for x in values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'absrel': self.absrel,
            'delta1': self.delta1,
            'num_gs': self.num_gs,
            'psnr': serialize_metric(self.psnr),
            'recon_time_s': self.recon_time_s,
            'ssim': self.ssim,
            'views': [v.to_dict() for v in self.views],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        views = [ViewMetrics(**{**v, 'psnr': parse_metric(v['psnr'])}) for v in data['views']]
        return cls(**{**data, 'psnr': parse_metric(data['psnr']), 'views': views})


def view_metrics(
    name: str, rgb: torch.Tensor, depth: torch.Tensor, gt_rgb: torch.Tensor, gt_depth: torch.Tensor
) -> ViewMetrics:
    with torch.no_grad():
        values = {
            'psnr': psnr(rgb, gt_rgb),
            'ssim': float(ssim(rgb, gt_rgb)),
            'absrel': absrel(depth, gt_depth),
            'delta1': delta1(depth, gt_depth),
        }
    for metric, value in values.items():
        if math.isnan(value):
            raise NumericError(f'{metric} of view {name}')
    return ViewMetrics(name=name, **values)
