"""Console output of the commands. Diagnostics go through logging."""
import math
import traceback
from typing import Any, Iterable

import click


def echo_info(msg: str):
    click.echo(msg)


def echo_warning(msg: str):
    click.echo(f'Warning: {msg}')


def echo_error(msg: str, exc_info=False):
    click.echo(f'Error: {msg}')

    if exc_info:
        click.echo(traceback.format_exc())


def echo_warnings(warnings: Iterable[Any]):
    for warning in warnings:
        echo_info('')
        echo_warning(str(warning))


def echo_errors(errors: Iterable[Any]):
    for error in errors:
        echo_info('')  # visually separate errors
        echo_error(str(error))


def format_psnr(value: float) -> str:
    return 'inf dB' if math.isinf(value) else f'{value:.3f} dB'


def echo_metrics(report: Any):
    """One line with the aggregate image and depth metrics of a report."""
    echo_info(
        f'PSNR {format_psnr(report.psnr)}, SSIM {report.ssim:.4f}, '
        f'AbsRel {report.absrel:.4f}, delta1 {report.delta1:.4f}, NumGS {report.num_gs}'
    )
