"""Gaussian decoder: attention over anchor tokens and a linear head emitting k raw Gaussians per anchor."""
import logging
from typing import Sequence

import torch
from torch import nn

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.config import RunConfig
from anchorsplat.errors import ContractError, PreconditionError, TrainingDivergenceError
from anchorsplat.features.lift import Encoder, lift_features
from anchorsplat.geometry.cameras import CameraView
from anchorsplat.nets.attention import AttentionBlock
from anchorsplat.scene.model import RAW_DIM, GaussianScene, neutral_raw

logger = logging.getLogger(__name__)


class GaussianDecoder(nn.Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        self.gaussian_config = config.gaussians
        self.per_anchor = config.gaussians.per_anchor
        self.max_tokens = config.decoder.max_tokens
        width = config.decoder.width

        self.embed = nn.Linear(config.features.dim + 3, width, dtype=torch.float64)
        self.blocks = nn.ModuleList(
            [AttentionBlock(width, config.decoder.ffn_mult) for _ in range(config.decoder.blocks)]
        )
        self.head = nn.Linear(width, self.per_anchor * RAW_DIM, dtype=torch.float64)
        # a zero head decodes every anchor to the neutral scene
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.register_buffer('raw_bias', neutral_raw(self.per_anchor, config.gaussians).reshape(-1))

    def tokens(self, anchors: AnchorSet) -> torch.Tensor:
        return self.embed(torch.cat([anchors.features, anchors.positions], dim=1))

    def forward(self, anchors: AnchorSet) -> torch.Tensor:
        """Raw parameters, anchor-major: row j belongs to anchor j // k."""
        if not anchors.populated:
            raise PreconditionError('anchor features are not populated; lift features before decoding')
        if len(anchors) > self.max_tokens:
            raise ContractError(f'{len(anchors)} anchor tokens exceed the decoder limit of {self.max_tokens}')
        if anchors.feature_dim + 3 != self.embed.in_features:
            raise ContractError(f'anchor feature dim {anchors.feature_dim} does not match the decoder')

        t = self.tokens(anchors)
        for i, block in enumerate(self.blocks):
            t = block(t)
            if not bool(torch.isfinite(t).all()):
                raise TrainingDivergenceError(stage='decoder', step=-1, trace=[], detail=f'block {i} produced NaN')
        raw = self.head(t) + self.raw_bias
        return raw.reshape(len(anchors) * self.per_anchor, RAW_DIM)


def decode(anchors: AnchorSet, decoder: GaussianDecoder) -> torch.Tensor:
    return decoder(anchors)


def forward_scene(anchors: AnchorSet, decoder: GaussianDecoder) -> GaussianScene:
    return GaussianScene.from_config(anchors, decoder(anchors), decoder.gaussian_config)


class StageOneModel(nn.Module):
    """Everything trained in stage one: the view encoder and the Gaussian decoder."""

    def __init__(self, config: RunConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config.features.dim)
        self.decoder = GaussianDecoder(config)

    def lift(self, anchors: AnchorSet, views: Sequence[CameraView]) -> AnchorSet:
        return lift_features(anchors, views, self.encoder, self.config.features, self.config.camera.z_near)

    def forward(self, anchors: AnchorSet, views: Sequence[CameraView]) -> GaussianScene:
        return forward_scene(self.lift(anchors, views), self.decoder)
