import io
import logging
from pathlib import Path

import numpy as np
import torch
from plyfile import PlyData, PlyElement

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.errors import PlyFormatError
from anchorsplat.file_utils import read_bytes, write_bytes, write_json
from anchorsplat.paths import FileExtension

logger = logging.getLogger(__name__)


def encode_anchor_ply(anchors: AnchorSet) -> bytes:
    """Anchor positions (normalized units) as a binary little-endian PLY with float32 x, y, z."""
    positions = anchors.positions.detach().numpy().astype(np.float32)
    vertices = np.empty(len(positions), dtype=[('x', '<f4'), ('y', '<f4'), ('z', '<f4')])
    vertices['x'], vertices['y'], vertices['z'] = positions[:, 0], positions[:, 1], positions[:, 2]

    buffer = io.BytesIO()
    PlyData([PlyElement.describe(vertices, 'vertex')], byte_order='<').write(buffer)
    return buffer.getvalue()


def decode_anchor_positions(payload: bytes) -> torch.Tensor:
    try:
        ply = PlyData.read(io.BytesIO(payload))
        vertex = ply['vertex']
        xyz = np.stack([np.asarray(vertex[name]) for name in ('x', 'y', 'z')], axis=1)
    except (KeyError, ValueError) as e:
        raise PlyFormatError('vertex', str(e))
    return torch.from_numpy(xyz.astype(np.float64))


def write_anchors(path: Path, anchors: AnchorSet):
    """Write `<path>` and its `.anchors.json` sidecar."""
    write_bytes(path, encode_anchor_ply(anchors))
    write_json(path.with_suffix(FileExtension.ANCHOR_SIDECAR.value), anchors.sidecar())
    logger.debug(f'Wrote {len(anchors)} anchors to {path}')


def read_anchor_positions(path: Path) -> torch.Tensor:
    return decode_anchor_positions(read_bytes(path))
