import math

import pytest
import torch

from anchorsplat.config import GaussianConfig, RenderConfig
from anchorsplat.errors import ContractError, NonFiniteAttributeError
from anchorsplat.geometry.cameras import Extrinsics
from anchorsplat.render.rasterizer import (
    project_gaussian,
    project_splats,
    rasterize,
    render,
    render_backward,
    tile_report,
)
from anchorsplat.scene.model import RAW_DIM, RAW_LAYOUT, GaussianScene, WorldGaussians
from anchorsplat.utils.runtime import configure_threads
from tests.anchorsplat.helpers import anchor_set, intrinsics, plane_view

BACKGROUND = [0.1, 0.2, 0.3]


def random_world(count: int, seed: int = 0) -> WorldGaussians:
    """Gaussians scattered in front of an identity camera, all inside a 16x12 view."""
    generator = torch.Generator().manual_seed(seed)

    def uniform(*shape, lo=0.0, hi=1.0):
        return lo + (hi - lo) * torch.rand(shape, generator=generator, dtype=torch.float64)

    z = uniform(count, lo=2.0, hi=4.0)
    means = torch.stack([uniform(count, lo=-0.4, hi=0.4) * z, uniform(count, lo=-0.3, hi=0.3) * z, z], dim=1)
    A = uniform(count, 3, 3, lo=-0.15, hi=0.15)
    covariances = A @ A.transpose(-1, -2) + 0.01 * torch.eye(3, dtype=torch.float64)
    return WorldGaussians(
        means=means,
        covariances=covariances,
        opacities=uniform(count, lo=0.2, hi=0.95),
        colors=uniform(count, 3),
    )


def brute_force(world: WorldGaussians, K, E, background, config: RenderConfig):
    """Per-pixel compositing over every unculled Gaussian, no tiles."""
    projected = project_splats(world.means, world.covariances, K, E, config.lowpass)
    live = [i for i in range(len(world.means)) if not bool(projected.culled[i])]
    order = sorted(live, key=lambda i: (float(projected.depths[i]), i))
    bg = torch.tensor(background, dtype=torch.float64)

    rgb = torch.zeros((K.height, K.width, 3), dtype=torch.float64)
    alpha = torch.zeros((K.height, K.width), dtype=torch.float64)
    depth = torch.zeros((K.height, K.width), dtype=torch.float64)
    for y in range(K.height):
        for x in range(K.width):
            transmittance, color, weight_sum, depth_sum = 1.0, torch.zeros(3, dtype=torch.float64), 0.0, 0.0
            for i in order:
                if transmittance < config.transmittance_min:
                    break
                dx = x - float(projected.means2d[i, 0])
                dy = y - float(projected.means2d[i, 1])
                a, b, c = (float(v) for v in projected.conics[i])
                power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                w = min(float(world.opacities[i]) * math.exp(power), config.alpha_max)
                color += transmittance * w * world.colors[i]
                weight_sum += transmittance * w
                depth_sum += transmittance * w * float(projected.depths[i])
                transmittance *= 1.0 - w
            rgb[y, x] = color + (1.0 - weight_sum) * bg
            alpha[y, x] = weight_sum
            depth[y, x] = depth_sum / max(weight_sum, 1e-8)
    return rgb, alpha, depth


@pytest.mark.parametrize('tile_size', [4, 5, 16])
def test_rasterize_matches_brute_force(tile_size):
    world = random_world(12)
    K = intrinsics(16, 12)
    E = Extrinsics.identity()
    config = RenderConfig(tile_size=tile_size)

    output = rasterize(world, K, E, BACKGROUND, config)
    rgb, alpha, depth = brute_force(world, K, E, BACKGROUND, config)

    assert torch.allclose(output.rgb, rgb, atol=1e-6)
    assert torch.allclose(output.alpha, alpha, atol=1e-6)
    # depth is a ratio of vanishing weights where nothing is drawn
    covered = alpha > 1e-3
    assert torch.allclose(output.depth[covered], depth[covered], atol=1e-5)


def test_rasterize_early_termination_matches_brute_force():
    world = random_world(20, seed=4)
    world = world._replace(opacities=torch.full_like(world.opacities, 0.95))
    K = intrinsics(16, 12)
    config = RenderConfig(tile_size=8, transmittance_min=0.05)

    output = rasterize(world, K, Extrinsics.identity(), BACKGROUND, config)
    rgb, _, _ = brute_force(world, K, Extrinsics.identity(), BACKGROUND, config)

    assert torch.allclose(output.rgb, rgb, atol=1e-6)


def test_rasterize_is_identical_across_workers():
    world = random_world(30, seed=2)
    K = intrinsics(16, 12)
    config = RenderConfig(tile_size=4)

    configure_threads(1)
    single = rasterize(world, K, Extrinsics.identity(), BACKGROUND, config)
    configure_threads(4)
    parallel = rasterize(world, K, Extrinsics.identity(), BACKGROUND, config)

    assert torch.equal(single.rgb, parallel.rgb)
    assert torch.equal(single.depth, parallel.depth)
    assert torch.equal(single.tile_counts, parallel.tile_counts)


def test_everything_culled_renders_background():
    world = random_world(5)
    world = world._replace(means=world.means * torch.tensor([1.0, 1.0, -1.0], dtype=torch.float64))

    output = rasterize(world, intrinsics(16, 12), Extrinsics.identity(), BACKGROUND, RenderConfig(tile_size=8))

    assert torch.equal(output.rgb, torch.tensor(BACKGROUND, dtype=torch.float64).expand(12, 16, 3))
    assert float(output.alpha.abs().max()) == 0.0
    assert float(output.depth.abs().max()) == 0.0
    assert int(output.tile_counts.sum()) == 0


def test_project_gaussian_culls_behind_camera():
    view = plane_view()
    cov = 0.01 * torch.eye(3, dtype=torch.float64)
    color = torch.ones(3, dtype=torch.float64)
    opacity = torch.tensor(0.5, dtype=torch.float64)

    assert project_gaussian(torch.tensor([0.0, 0.0, -1.0]).double(), cov, color, opacity, view) is None
    splat = project_gaussian(torch.tensor([0.0, 0.0, 2.0]).double(), cov, color, opacity, view, gaussian_id=7)
    assert splat.gaussian_id == 7
    assert splat.mean2d.tolist() == [8.0, 6.0]
    assert float(splat.depth) == 2.0


def test_tile_report():
    config = RenderConfig(tile_size=8)
    output = rasterize(random_world(6), intrinsics(16, 12), Extrinsics.identity(), BACKGROUND, config)
    report = tile_report(output, 8)

    assert report['tiles_x'] == 2
    assert report['tiles_y'] == 2
    assert len(report['counts']) == 2 and len(report['counts'][0]) == 2


def _gradient_scene(raw: torch.Tensor) -> GaussianScene:
    anchors = anchor_set([[-0.2, 0.1, -0.3], [0.25, -0.1, 0.3]], center=(0.0, 0.0, 3.0))
    return GaussianScene.from_config(anchors, raw, GaussianConfig(per_anchor=1))


def _gradient_raw() -> torch.Tensor:
    generator = torch.Generator().manual_seed(5)
    raw = 0.1 * torch.randn((2, RAW_DIM), generator=generator, dtype=torch.float64)
    raw[:, RAW_LAYOUT['scale'][0] : RAW_LAYOUT['scale'][1]] += math.log(0.3)
    raw[:, RAW_LAYOUT['rotation'][0]] += 1.0
    return raw


def test_render_gradients_match_finite_differences():
    view = plane_view(width=8, height=8)
    config = RenderConfig(tile_size=8)

    def fn(raw):
        output = render(_gradient_scene(raw), view, config)
        return output.rgb, output.depth

    raw = _gradient_raw().requires_grad_(True)
    assert torch.autograd.gradcheck(fn, (raw,), eps=1e-6, atol=1e-5)


def test_render_backward_splits_gradients_by_attribute():
    view = plane_view(width=8, height=8)
    scene = _gradient_scene(_gradient_raw().requires_grad_(True))
    output = render(scene, view, RenderConfig(tile_size=8))

    grads = render_backward(scene, output, torch.ones_like(output.rgb), torch.zeros_like(output.depth))

    assert set(grads) == set(RAW_LAYOUT)
    assert grads['sh'].shape == (2, 3)
    assert float(grads['sh'].abs().sum()) > 0.0


def test_render_backward_rejects_shape_mismatch():
    view = plane_view(width=8, height=8)
    scene = _gradient_scene(_gradient_raw().requires_grad_(True))
    output = render(scene, view, RenderConfig(tile_size=8))

    with pytest.raises(ContractError):
        render_backward(scene, output, torch.ones((4, 4, 3)), torch.zeros_like(output.depth))


def test_render_rejects_non_finite_gaussian():
    raw = _gradient_raw()
    raw[1, RAW_LAYOUT['sh'][0]] = math.nan

    with pytest.raises(NonFiniteAttributeError) as e:
        render(_gradient_scene(raw), plane_view(width=8, height=8))
    assert e.value.gaussian_id == 1
