import json

import numpy as np
import pytest
import torch

from anchorsplat.errors import InvalidViewFileError
from anchorsplat.imaging import encode_pfm, read_depth, read_pfm, read_png, write_pfm, write_png
from tests.anchorsplat.helpers import checker_image


def test_png_round_trip(tmp_path):
    image = checker_image(8, 6)
    write_png(tmp_path / 'a.png', image)

    restored = read_png(tmp_path / 'a.png')

    assert restored.dtype == torch.float64
    assert restored.shape == (6, 8, 3)
    assert torch.allclose(restored, image, atol=0.5 / 255)


def test_png_encoding_is_byte_stable(tmp_path):
    write_png(tmp_path / 'a.png', checker_image(8, 6))
    write_png(tmp_path / 'b.png', checker_image(8, 6))

    assert (tmp_path / 'a.png').read_bytes() == (tmp_path / 'b.png').read_bytes()


def test_unreadable_png(tmp_path):
    (tmp_path / 'a.png').write_bytes(b'nope')

    with pytest.raises(InvalidViewFileError):
        read_png(tmp_path / 'a.png')


def test_pfm_rows_are_stored_bottom_up():
    depth = torch.tensor([[1.0, 2.0], [3.0, 4.0]], dtype=torch.float64)
    payload = encode_pfm(depth)

    assert payload.startswith(b'Pf\n2 2\n-1.0\n')
    body = np.frombuffer(payload[len(b'Pf\n2 2\n-1.0\n') :], dtype='<f4')
    assert body.tolist() == [3.0, 4.0, 1.0, 2.0]


def test_pfm_round_trip(tmp_path):
    depth = torch.tensor([[1.5, 2.25, 0.0], [3.0, 4.5, 8.0]], dtype=torch.float64)
    write_pfm(tmp_path / 'd.pfm', depth)

    assert torch.equal(read_pfm(tmp_path / 'd.pfm'), depth)


def test_pfm_with_wrong_size(tmp_path):
    (tmp_path / 'd.pfm').write_bytes(b'Pf\n2 2\n-1.0\n' + bytes(4))

    with pytest.raises(InvalidViewFileError, match='expected 16 data bytes, found 4'):
        read_pfm(tmp_path / 'd.pfm')


def test_raw_depth_with_sidecar(tmp_path):
    values = np.array([[1.0, -2.0, np.nan], [np.inf, 0.5, 3.0]], dtype='<f4')
    (tmp_path / 'd.f32').write_bytes(values.tobytes())
    (tmp_path / 'd.f32.json').write_text(json.dumps({'width': 3, 'height': 2}))

    depth = read_depth(tmp_path / 'd.f32')

    # negative and non-finite readings become invalid pixels
    assert depth.tolist() == [[1.0, 0.0, 0.0], [0.0, 0.5, 3.0]]


def test_raw_depth_size_mismatch(tmp_path):
    (tmp_path / 'd.f32').write_bytes(bytes(8))
    (tmp_path / 'd.f32.json').write_text(json.dumps({'width': 3, 'height': 2}))

    with pytest.raises(InvalidViewFileError, match='does not match declared 3x2'):
        read_depth(tmp_path / 'd.f32')


def test_unsupported_depth_format(tmp_path):
    (tmp_path / 'd.exr').write_bytes(b'')

    with pytest.raises(InvalidViewFileError, match='unsupported depth format .exr'):
        read_depth(tmp_path / 'd.exr')
