import json
from enum import Enum
from typing import Any, Dict, List, Optional

import xxhash
from pydantic import BaseModel, Field, root_validator, validator


class ConfigModel(BaseModel):
    class Config:
        extra = 'forbid'
        validate_assignment = True
        use_enum_values = False


class PoolingMode(Enum):
    """How per-view anchor features are pooled."""

    AVERAGE = 'avg'
    MAX = 'max'
    FIFO = 'fifo'


class CameraConfig(ConfigModel):
    z_near: float = Field(1e-4, gt=0)
    """
    Points closer than this (camera z, world units) are flagged behind the camera
    """


class AnchorConfig(ConfigModel):
    stride: int = Field(1, ge=1)
    """
    Back-projection pixel stride
    """

    clip_lo_pct: float = Field(0.01, ge=0, lt=1)
    clip_hi_pct: float = Field(0.99, gt=0, le=1)
    clip_margin: float = Field(0.05, ge=0)

    voxel_divisions: int = Field(64, ge=1)
    """
    Voxel size is the normalized scene-cube edge (2.0) divided by this
    """

    voxel_size: Optional[float] = Field(None, gt=0)
    """
    Explicit voxel size in normalized units, overrides voxel_divisions
    """

    cap: int = Field(1024, ge=1)
    """
    Upper bound on the number of anchors
    """

    budget: Optional[int] = Field(None, ge=1)
    """
    Fixed anchor count replacing the voxel-occupancy budget
    """

    fps_seed_index: Optional[int] = Field(None, ge=0)
    """
    FPS start point; default is the point nearest the centroid
    """

    @root_validator(skip_on_failure=True)
    def percentiles_ordered(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if values['clip_lo_pct'] >= values['clip_hi_pct']:
            raise ValueError('clip_lo_pct must be smaller than clip_hi_pct')
        return values

    @property
    def effective_voxel_size(self) -> float:
        if self.voxel_size is not None:
            return self.voxel_size
        return 2.0 / self.voxel_divisions


class GaussianConfig(ConfigModel):
    per_anchor: int = Field(4, ge=1)
    offset_bound: float = Field(10 / 128, gt=0)
    scale_min: float = Field(1e-4, gt=0)
    scale_max: float = Field(0.5, gt=0)
    init_scale: float = Field(0.05, gt=0)
    """
    Scale of a freshly initialized Gaussian (normalized units)
    """

    @root_validator(skip_on_failure=True)
    def scales_ordered(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if not values['scale_min'] < values['init_scale'] < values['scale_max']:
            raise ValueError('init_scale must lie strictly between scale_min and scale_max')
        return values


class RenderConfig(ConfigModel):
    tile_size: int = Field(16, ge=1)
    lowpass: float = Field(0.3, ge=0)
    alpha_max: float = Field(0.99, gt=0, lt=1)
    transmittance_min: float = Field(1e-4, ge=0, lt=1)
    background: List[float] = Field([0.0, 0.0, 0.0], min_items=3, max_items=3)

    @validator('background', each_item=True)
    def unit_interval(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError('background channels must lie in [0, 1]')
        return value


class FeatureConfig(ConfigModel):
    dim: int = Field(32, ge=1)
    pooling: PoolingMode = PoolingMode.AVERAGE
    visibility_tau: float = Field(0.05, gt=0)
    use_depth: bool = True
    use_rays: bool = True


class DecoderConfig(ConfigModel):
    width: int = Field(64, ge=1)
    blocks: int = Field(2, ge=0)
    ffn_mult: int = Field(2, ge=1)
    max_tokens: int = Field(4096, ge=1)


class RefinerConfig(ConfigModel):
    error_dim: int = Field(24, ge=9)
    width: int = Field(64, ge=1)
    error_blocks: int = Field(1, ge=0)
    serial_blocks: int = Field(2, ge=0)
    window: int = Field(64, ge=1)
    passes: int = Field(1, ge=1)
    morton_bits: int = Field(10, ge=1, le=21)


class LossWeights(ConfigModel):
    image: float = Field(200.0, ge=0)
    ssim: float = Field(0.2, ge=0)
    lpips: float = Field(0.2, ge=0)
    """
    Kept for parity with the published weights; the perceptual term is not computed
    """

    depth: float = Field(100.0, ge=0)
    """
    Applied to depths in normalized scene units, world depth divided by the half extent
    """

    opacity: float = Field(0.1, ge=0)
    scale: float = Field(1e4, ge=0)
    depth_alpha_threshold: float = Field(0.5, ge=0, le=1)


class OptimConfig(ConfigModel):
    lr: float = Field(1e-3, gt=0)
    stage1_steps: int = Field(2000, ge=0)
    stage2_steps: int = Field(2000, ge=0)
    views_per_step: int = Field(2, ge=1)
    checkpoint_every: int = Field(100, ge=1)
    fit_lr: float = Field(1e-2, gt=0)
    fit_steps: int = Field(2000, ge=0)
    fit_views_per_step: int = Field(1, ge=1)


class RunConfig(ConfigModel):
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    camera: CameraConfig = CameraConfig()
    anchors: AnchorConfig = AnchorConfig()
    gaussians: GaussianConfig = GaussianConfig()
    render: RenderConfig = RenderConfig()
    features: FeatureConfig = FeatureConfig()
    decoder: DecoderConfig = DecoderConfig()
    refiner: RefinerConfig = RefinerConfig()
    loss: LossWeights = LossWeights()
    optim: OptimConfig = OptimConfig()

    def to_dict(self) -> Dict[str, Any]:
        return json.loads(self.json())

    def config_hash(self) -> str:
        """Stable hash of the full configuration, used in reproducibility records."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return xxhash.xxh64(canonical.encode('utf8')).hexdigest()

    def evolve(self, **sections: Any) -> 'RunConfig':
        """Copy with some section fields replaced, e.g. evolve(features={'pooling': 'max'})."""
        data = self.to_dict()
        for section, updates in sections.items():
            if isinstance(updates, dict):
                data[section] = {**data[section], **updates}
            else:
                data[section] = updates
        return RunConfig.parse_obj(data)
