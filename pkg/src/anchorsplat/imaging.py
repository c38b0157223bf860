"""Image and depth-map codecs: 8-bit PNG, PFM, raw float32 with JSON sidecar."""
import io
import logging
import re
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from anchorsplat.errors import InvalidViewFileError
from anchorsplat.file_utils import read_bytes, read_json, write_bytes
from anchorsplat.paths import FileExtension

logger = logging.getLogger(__name__)

_PFM_HEADER = re.compile(rb'^(Pf|PF)\s+(\d+)\s+(\d+)\s+(-?[0-9.eE+-]+)\s')


def read_png(path: Path) -> torch.Tensor:
    """8-bit PNG mapped linearly to [0, 1], returned as float64 H×W×3."""
    try:
        with Image.open(io.BytesIO(read_bytes(path))) as img:
            array = np.asarray(img.convert('RGB'), dtype=np.uint8)
    except OSError as e:
        raise InvalidViewFileError(path=path, reason=str(e))
    return torch.from_numpy(array.astype(np.float64) / 255.0)


def encode_png(rgb: torch.Tensor) -> bytes:
    array = np.clip(np.rint(rgb.detach().cpu().numpy() * 255.0), 0, 255).astype(np.uint8)
    buffer = io.BytesIO()
    # no timestamps or text chunks, so identical pixels give identical bytes
    Image.fromarray(array, mode='RGB').save(buffer, format='PNG', optimize=False, compress_level=6)
    return buffer.getvalue()


def write_png(path: Path, rgb: torch.Tensor):
    write_bytes(path, encode_png(rgb))


def encode_pfm(depth: torch.Tensor) -> bytes:
    """Single-channel little-endian PFM; rows stored bottom-to-top as the format requires."""
    array = depth.detach().cpu().numpy().astype('<f4')
    height, width = array.shape
    header = f'Pf\n{width} {height}\n-1.0\n'.encode('ascii')
    return header + np.flipud(array).tobytes()


def decode_pfm(payload: bytes, path: Path) -> torch.Tensor:
    match = _PFM_HEADER.match(payload)
    if match is None:
        raise InvalidViewFileError(path=path, reason='not a PFM file')

    kind, width, height, scale = match.group(1), int(match.group(2)), int(match.group(3)), float(match.group(4))
    channels = 3 if kind == b'PF' else 1
    dtype = '<f4' if scale < 0 else '>f4'
    body = payload[match.end() :]
    expected = width * height * channels * 4
    if len(body) != expected:
        raise InvalidViewFileError(path=path, reason=f'expected {expected} data bytes, found {len(body)}')

    array = np.frombuffer(body, dtype=dtype).reshape(height, width, channels)
    array = np.flipud(array)[..., 0] if channels == 1 else np.flipud(array).mean(axis=2)
    return torch.from_numpy(np.ascontiguousarray(array).astype(np.float64))


def read_pfm(path: Path) -> torch.Tensor:
    return decode_pfm(read_bytes(path), path)


def write_pfm(path: Path, depth: torch.Tensor):
    write_bytes(path, encode_pfm(depth))


def read_raw_depth(path: Path) -> torch.Tensor:
    """Raw row-major float32 depth next to a `<path>.json` sidecar declaring width and height."""
    sidecar = read_json(path.with_suffix(path.suffix + FileExtension.JSON.value))
    width, height = int(sidecar['width']), int(sidecar['height'])
    payload = read_bytes(path)
    if len(payload) != width * height * 4:
        raise InvalidViewFileError(path=path, reason=f'size does not match declared {width}x{height}')
    array = np.frombuffer(payload, dtype='<f4').reshape(height, width)
    return torch.from_numpy(array.astype(np.float64))


def read_depth(path: Path) -> torch.Tensor:
    logger.debug(f'Read depth {path}')
    suffix = path.suffix.lower()
    if suffix == FileExtension.PFM.value:
        depth = read_pfm(path)
    elif suffix == FileExtension.RAW_DEPTH.value:
        depth = read_raw_depth(path)
    else:
        raise InvalidViewFileError(path=path, reason=f'unsupported depth format {suffix}')
    # non-finite and negative readings are invalid pixels
    return torch.where(torch.isfinite(depth) & (depth > 0), depth, torch.zeros_like(depth))
