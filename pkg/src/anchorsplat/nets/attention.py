import math
from typing import Optional

import torch
from torch import nn


class AttentionBlock(nn.Module):
    """
    Pre-norm residual transformer block with single-head softmax attention.

    t' = t + Attn(LN(t)); t'' = t' + FFN(LN(t')). With `window` set, attention runs inside consecutive non-overlapping
    windows of the token order, the last one possibly shorter.
    """

    def __init__(self, width: int, ffn_mult: int = 2):
        super().__init__()
        self.width = width
        self.norm1 = nn.LayerNorm(width, dtype=torch.float64)
        self.query = nn.Linear(width, width, dtype=torch.float64)
        self.key = nn.Linear(width, width, dtype=torch.float64)
        self.value = nn.Linear(width, width, dtype=torch.float64)
        self.out = nn.Linear(width, width, dtype=torch.float64)
        self.norm2 = nn.LayerNorm(width, dtype=torch.float64)
        self.fc1 = nn.Linear(width, width * ffn_mult, dtype=torch.float64)
        self.fc2 = nn.Linear(width * ffn_mult, width, dtype=torch.float64)

    def zero_residual_branches(self):
        """Make the block an exact identity at initialization."""
        for layer in (self.out, self.fc2):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def _attend(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = self.query(x), self.key(x), self.value(x)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.width)
        return torch.softmax(scores, dim=-1) @ v

    def attention(self, x: torch.Tensor, window: Optional[int] = None) -> torch.Tensor:
        if window is None or window >= x.shape[0]:
            return self._attend(x)
        return torch.cat([self._attend(chunk) for chunk in torch.split(x, window)])

    def forward(self, tokens: torch.Tensor, window: Optional[int] = None) -> torch.Tensor:
        tokens = tokens + self.out(self.attention(self.norm1(tokens), window))
        return tokens + self.fc2(torch.tanh(self.fc1(self.norm2(tokens))))
