from anchorsplat.config.run_config import (
    AnchorConfig,
    CameraConfig,
    DecoderConfig,
    FeatureConfig,
    GaussianConfig,
    LossWeights,
    OptimConfig,
    PoolingMode,
    RefinerConfig,
    RenderConfig,
    RunConfig,
)
from anchorsplat.config.storage import load_config

__all__ = [
    'AnchorConfig',
    'CameraConfig',
    'DecoderConfig',
    'FeatureConfig',
    'GaussianConfig',
    'LossWeights',
    'OptimConfig',
    'PoolingMode',
    'RefinerConfig',
    'RenderConfig',
    'RunConfig',
    'load_config',
]
