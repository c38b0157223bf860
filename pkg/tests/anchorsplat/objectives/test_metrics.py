import math

import pytest
import torch

from anchorsplat.errors import NumericError, UndefinedMetricError
from anchorsplat.objectives.metrics import (
    MetricsReport,
    ViewMetrics,
    absrel,
    delta1,
    parse_metric,
    psnr,
    serialize_metric,
    view_metrics,
)
from tests.anchorsplat.helpers import checker_image


def test_psnr():
    black = torch.zeros((4, 4, 3), dtype=torch.float64)

    assert psnr(black, torch.full_like(black, 0.5)) == pytest.approx(6.0206, abs=1e-4)
    assert psnr(black, black) == math.inf


def test_depth_metrics():
    pred = torch.tensor([1.5, 1.0, 7.0], dtype=torch.float64)
    target = torch.tensor([1.0, 1.0, 0.0], dtype=torch.float64)

    assert absrel(pred, target) == pytest.approx(0.25)
    assert delta1(pred, target) == 0.5


def test_delta1_zero_prediction_fails_threshold():
    assert delta1(torch.tensor([0.0, 1.0]), torch.tensor([1.0, 1.0])) == 0.5


def test_delta1_is_symmetric_in_prediction_and_target():
    generator = torch.Generator().manual_seed(0)
    pred = 0.5 + 2.0 * torch.rand(64, generator=generator, dtype=torch.float64)
    target = 0.5 + 2.0 * torch.rand(64, generator=generator, dtype=torch.float64)

    assert 0.0 < delta1(pred, target) < 1.0
    assert delta1(pred, target) == delta1(target, pred)


def test_explicit_mask_is_intersected_with_valid_depth():
    pred = torch.tensor([2.0, 1.0], dtype=torch.float64)
    target = torch.tensor([1.0, 1.0], dtype=torch.float64)

    assert absrel(pred, target, mask=torch.tensor([False, True])) == 0.0


@pytest.mark.parametrize('metric', [absrel, delta1])
def test_depth_metrics_need_valid_pixels(metric):
    with pytest.raises(UndefinedMetricError, match='no valid pixels'):
        metric(torch.ones(3), torch.zeros(3))


def test_metric_serialization():
    assert serialize_metric(math.inf) == 'inf'
    assert serialize_metric(12.5) == 12.5
    assert parse_metric('inf') == math.inf
    assert parse_metric(3) == 3.0


def _view(name: str, psnr_value: float) -> ViewMetrics:
    return ViewMetrics(name=name, psnr=psnr_value, ssim=0.5, absrel=0.1, delta1=0.9)


def test_report_aggregates_plain_means():
    report = MetricsReport.from_views([_view('a', 20.0), _view('b', 30.0)], num_gs=12, recon_time_s=1.5)

    assert report.psnr == 25.0
    assert report.ssim == 0.5
    assert report.num_gs == 12
    assert not report.has_nan()


def test_report_with_infinite_psnr_round_trips():
    report = MetricsReport.from_views([_view('a', math.inf), _view('b', 30.0)], num_gs=0, recon_time_s=0.0)
    data = report.to_dict()

    assert data['psnr'] == 'inf'
    assert data['views'][0]['psnr'] == 'inf'
    assert list(data) == sorted(data)
    assert MetricsReport.from_dict(data) == report


def test_report_detects_nan():
    report = MetricsReport.from_views([_view('a', math.nan)], num_gs=1, recon_time_s=0.0)

    assert report.has_nan()


def test_view_metrics_of_ground_truth():
    image = checker_image(16, 16)
    depth = torch.full((16, 16), 2.0, dtype=torch.float64)

    metrics = view_metrics('novel_000', image, depth, image, depth)

    assert metrics.psnr == math.inf
    assert metrics.ssim == pytest.approx(1.0)
    assert metrics.absrel == 0.0
    assert metrics.delta1 == 1.0


def test_view_metrics_rejects_nan():
    image = checker_image(16, 16)
    depth = torch.full((16, 16), 2.0, dtype=torch.float64)
    broken = image.clone()
    broken[0, 0, 0] = math.nan

    with pytest.raises(NumericError, match='psnr of view novel_000'):
        view_metrics('novel_000', broken, depth, image, depth)
