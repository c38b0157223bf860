import pytest
import torch

from anchorsplat.nets.attention import AttentionBlock
from tests.anchorsplat.helpers import assert_gradients_match


def _tokens(count: int, width: int = 8, seed: int = 0) -> torch.Tensor:
    return torch.randn((count, width), generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_zero_residual_branches_is_identity():
    block = AttentionBlock(8)
    block.zero_residual_branches()
    tokens = _tokens(5)

    assert torch.equal(block(tokens), tokens)
    assert torch.equal(block(tokens, window=2), tokens)


def test_wide_window_equals_full_attention():
    torch.manual_seed(0)
    block = AttentionBlock(8)
    tokens = _tokens(6)

    assert torch.equal(block(tokens, window=6), block(tokens))
    assert torch.equal(block(tokens, window=100), block(tokens))


def test_windows_do_not_mix():
    torch.manual_seed(1)
    block = AttentionBlock(8)
    tokens = _tokens(7)
    changed = tokens.clone()
    changed[5:] = _tokens(2, seed=9)

    out = block(tokens, window=3)
    out_changed = block(changed, window=3)

    # windows [0:3] and [3:6] differ only in token 5, the last window [6:7] entirely
    assert torch.equal(out[:3], out_changed[:3])
    assert not torch.allclose(out[3:], out_changed[3:])


def test_short_last_window_matches_standalone_block():
    torch.manual_seed(2)
    block = AttentionBlock(8)
    tokens = _tokens(5)

    assert torch.allclose(block(tokens, window=4)[4:], block(tokens[4:]))


@pytest.mark.parametrize('window', [None, 2])
def test_attention_gradients_match_finite_differences(window):
    torch.manual_seed(3)
    block = AttentionBlock(8)
    tokens = _tokens(4).requires_grad_(True)

    assert torch.autograd.gradcheck(lambda t: block(t, window=window), (tokens,), eps=1e-6, atol=1e-6)

    weights = _tokens(4, seed=5)
    parameters = [block.norm1.weight, block.query.weight, block.key.weight, block.value.weight, block.fc1.weight]
    assert_gradients_match(lambda: (block(tokens.detach(), window=window) * weights).sum(), parameters)
