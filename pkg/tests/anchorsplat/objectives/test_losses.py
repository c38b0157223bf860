import pytest
import torch

from anchorsplat.anchors.sampler import build_anchors
from anchorsplat.config import GaussianConfig, LossWeights, RenderConfig
from anchorsplat.errors import ContractError
from anchorsplat.objectives.losses import (
    LOSS_TERMS,
    SSIM_C1,
    depth_loss,
    image_loss,
    l1,
    opacity_reg,
    render_loss,
    scale_reg,
    ssim,
    total_loss,
)
from anchorsplat.nets.decoder import StageOneModel
from anchorsplat.nets.refiner import GaussianRefiner, refine
from anchorsplat.render.rasterizer import render
from anchorsplat.scene.model import GaussianScene
from tests.anchorsplat.helpers import (
    anchor_set,
    assert_gradients_match,
    checker_image,
    perturb_parameters,
    plane_view,
    tiny_config,
)


def test_ssim_of_identical_images():
    image = checker_image(16, 16)

    assert float(ssim(image, image)) == pytest.approx(1.0)


def test_ssim_of_constant_images():
    black = torch.zeros((16, 16, 3), dtype=torch.float64)
    white = torch.ones((16, 16, 3), dtype=torch.float64)

    assert float(ssim(black, white)) == pytest.approx(SSIM_C1 / (1 + SSIM_C1), abs=1e-6)


def test_ssim_window_shrinks_for_small_images():
    image = checker_image(6, 4)

    assert float(ssim(image, image)) == pytest.approx(1.0)


def test_l1_rejects_shape_mismatch():
    with pytest.raises(ContractError, match='shape mismatch'):
        l1(torch.zeros((2, 2, 3)), torch.zeros((2, 3, 3)))


def test_render_loss_vanishes_on_target():
    image = checker_image(16, 16)

    assert float(render_loss(image, image, LossWeights())) == pytest.approx(0.0, abs=1e-10)
    assert float(render_loss(image * 0.5, image, LossWeights(ssim=0.0))) == pytest.approx(float(l1(image * 0.5, image)))


def test_depth_loss_masks_invalid_pixels():
    rendered = torch.tensor([[1.5, 1.0], [2.0, 3.0]], dtype=torch.float64)
    target = torch.tensor([[1.0, 1.0], [0.0, 3.0]], dtype=torch.float64)
    alpha = torch.ones((2, 2), dtype=torch.float64)

    assert float(depth_loss(rendered, alpha, target)) == pytest.approx(0.5 / 3)

    alpha[0, 0] = 0.4
    assert float(depth_loss(rendered, alpha, target)) == 0.0


def test_depth_loss_without_valid_pixels_keeps_graph():
    rendered = torch.ones((2, 2), dtype=torch.float64, requires_grad=True)
    loss = depth_loss(rendered, torch.zeros((2, 2), dtype=torch.float64), torch.ones((2, 2), dtype=torch.float64))
    loss.backward()

    assert float(loss) == 0.0
    assert torch.equal(rendered.grad, torch.zeros((2, 2), dtype=torch.float64))


def test_regularizers():
    assert float(opacity_reg(torch.tensor([0.25, 0.75]))) == 0.5
    assert float(scale_reg(torch.tensor([[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]]))) == 3.0625


@pytest.fixture
def rendered_scene():
    anchors = anchor_set([[0.0, 0.0, 0.0], [0.2, -0.1, 0.1]], center=(0.0, 0.0, 2.0), half_extent=2.0)
    scene = GaussianScene.neutral(anchors, GaussianConfig(per_anchor=2))
    scene = scene.with_raw(scene.raw.clone().requires_grad_(True))
    views = [plane_view('a'), plane_view('b')]
    renders = [render(scene, view, RenderConfig(tile_size=8)) for view in views]
    return scene, views, renders


def test_total_loss_breakdown(rendered_scene):
    scene, views, renders = rendered_scene

    terms = total_loss(renders, views, scene, LossWeights())

    assert list(terms) == list(LOSS_TERMS) + ['total']
    assert float(terms['total']) == pytest.approx(sum(float(terms[name]) for name in LOSS_TERMS))
    terms['total'].backward()
    assert float(scene.raw.grad.abs().sum()) > 0.0


def test_total_loss_weights_scale_terms(rendered_scene):
    scene, views, renders = rendered_scene

    base = total_loss(renders, views, scene, LossWeights())
    doubled = total_loss(renders, views, scene, LossWeights(depth=200.0))

    assert float(doubled['depth']) == pytest.approx(2 * float(base['depth']))
    assert float(doubled['image']) == pytest.approx(float(base['image']))


def test_total_loss_depth_term_is_in_normalized_units(rendered_scene):
    scene, views, renders = rendered_scene

    terms = total_loss(renders, views, scene, LossWeights())

    world = sum(float(depth_loss(output.depth, output.alpha, view.depth)) for output, view in zip(renders, views))
    assert float(terms['depth']) == pytest.approx(100.0 * world / scene.normalization.half_extent)


def test_total_loss_rejects_count_mismatch(rendered_scene):
    scene, views, renders = rendered_scene

    with pytest.raises(ContractError):
        total_loss(renders[:1], views, scene, LossWeights())


def test_image_loss_matches_image_term(rendered_scene):
    scene, views, renders = rendered_scene

    terms = total_loss(renders, views, scene, LossWeights())

    assert float(image_loss(renders, views, LossWeights())) == pytest.approx(float(terms['image']))


def _image_pair(height: int = 12, width: int = 12):
    generator = torch.Generator().manual_seed(0)
    x = 0.1 + 0.8 * torch.rand((height, width, 3), generator=generator, dtype=torch.float64)
    y = 0.1 + 0.8 * torch.rand((height, width, 3), generator=generator, dtype=torch.float64)
    return x, y


def test_ssim_is_symmetric():
    x, y = _image_pair()

    assert float(ssim(x, y)) == pytest.approx(float(ssim(y, x)), rel=1e-12)


def test_ssim_gradients_match_finite_differences():
    x, y = _image_pair()

    assert torch.autograd.gradcheck(ssim, (x.requires_grad_(True), y.requires_grad_(True)), eps=1e-6, atol=1e-6)


def test_render_loss_gradients_match_finite_differences():
    x, y = _image_pair()

    def fn(rendered):
        return render_loss(rendered, y, LossWeights())

    assert torch.autograd.gradcheck(fn, (x.requires_grad_(True),), eps=1e-6, atol=1e-6)


@pytest.mark.parametrize('regularizer,activation', [(opacity_reg, torch.sigmoid), (scale_reg, torch.exp)])
def test_regularizers_descend_under_gradient_steps(regularizer, activation):
    generator = torch.Generator().manual_seed(0)
    raw = (0.5 * torch.randn((8, 3), generator=generator, dtype=torch.float64) - 1.0).requires_grad_(True)
    optimizer = torch.optim.SGD([raw], lr=0.5)

    values = []
    for _ in range(10):
        optimizer.zero_grad()
        loss = regularizer(activation(raw))
        loss.backward()
        optimizer.step()
        values.append(float(loss))

    assert all(later < earlier for earlier, later in zip(values, values[1:]))


@pytest.mark.slow
def test_total_loss_gradients_match_finite_differences_across_both_stages():
    config = tiny_config(refiner={'window': 64})
    views = [plane_view('a', width=16, height=16), plane_view('b', width=16, height=16)]
    anchors = build_anchors(views, config)
    torch.manual_seed(0)
    model = StageOneModel(config)
    perturb_parameters(model.decoder.head, std=0.02, seed=1)
    refiner = GaussianRefiner(config)
    perturb_parameters(refiner, std=0.2, seed=2)
    with torch.no_grad():
        refiner.head.weight.mul_(0.25)

    def loss():
        scene = refine(model(anchors, views), model.lift(anchors, views), views, refiner, config)
        renders = [render(scene, view, config.render, z_near=config.camera.z_near) for view in views]
        return total_loss(renders, views, scene, config.loss)['total']

    tensors = [
        model.encoder.conv1.weight,
        model.encoder.conv2.weight,
        model.decoder.embed.weight,
        model.decoder.blocks[0].key.weight,
        model.decoder.head.weight,
        refiner.error_blocks[0].value.weight,
        refiner.embed.weight,
        refiner.serial_blocks[0].fc1.weight,
    ]
    assert assert_gradients_match(loss, tensors, samples=13) >= 100
