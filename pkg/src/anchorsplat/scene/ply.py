"""
Binary little-endian PLY for Gaussian scenes.

Properties are stored as doubles so read(write(scene)) is bit-exact. The `vertex` element holds one row per Gaussian
(composed center x,y,z for viewers, then the raw parameters), the `anchor` element holds anchor positions, and a
comment line carries the JSON sidecar.
"""
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import torch
from plyfile import PlyData, PlyElement, PlyParseError

from anchorsplat.anchors.sampler import AnchorSet
from anchorsplat.errors import PlyFormatError
from anchorsplat.file_utils import read_bytes, write_bytes
from anchorsplat.scene.model import RAW_DIM, GaussianScene
from anchorsplat.scene.normalization import SceneNormalization

logger = logging.getLogger(__name__)

SIDECAR_PREFIX = 'anchorsplat '

RAW_PROPERTIES: List[str] = (
    ['off_0', 'off_1', 'off_2', 'opacity']
    + [f'scale_{i}' for i in range(3)]
    + [f'rot_{i}' for i in range(4)]
    + [f'f_dc_{i}' for i in range(3)]
)
VERTEX_PROPERTIES: List[str] = ['x', 'y', 'z'] + RAW_PROPERTIES + ['anchor_id']


def _sidecar(scene: GaussianScene) -> Dict[str, Any]:
    return {
        'anchor_count': len(scene.anchors),
        'gaussians_per_anchor': scene.gaussians_per_anchor,
        'normalization': scene.normalization.to_dict(),
        'offset_bound': scene.offset_bound,
        'scale_max': scene.scale_max,
        'scale_min': scene.scale_min,
        'seed': scene.anchors.seed_index,
        'source_count': scene.anchors.source_count,
        'voxel_size': scene.anchors.voxel_size,
    }


def write_ply(scene: GaussianScene) -> bytes:
    raw = scene.raw.detach().numpy().astype('<f8')
    means = scene.means().detach().numpy().astype('<f8')

    vertex_dtype = [(name, '<f8') for name in VERTEX_PROPERTIES[:-1]] + [('anchor_id', '<i4')]
    vertices = np.empty(len(scene), dtype=vertex_dtype)
    for i, axis in enumerate('xyz'):
        vertices[axis] = means[:, i]
    for i, name in enumerate(RAW_PROPERTIES):
        vertices[name] = raw[:, i]
    vertices['anchor_id'] = scene.anchor_ids.numpy().astype('<i4')

    positions = scene.anchors.positions.detach().numpy().astype('<f8')
    anchors = np.empty(len(positions), dtype=[('x', '<f8'), ('y', '<f8'), ('z', '<f8')])
    for i, axis in enumerate('xyz'):
        anchors[axis] = positions[:, i]

    sidecar = SIDECAR_PREFIX + json.dumps(_sidecar(scene), sort_keys=True)
    ply = PlyData(
        [PlyElement.describe(vertices, 'vertex'), PlyElement.describe(anchors, 'anchor')],
        byte_order='<',
        comments=[sidecar],
    )
    buffer = io.BytesIO()
    ply.write(buffer)
    return buffer.getvalue()


def _read_sidecar(ply: PlyData) -> Dict[str, Any]:
    for comment in ply.comments:
        if comment.startswith(SIDECAR_PREFIX):
            try:
                return json.loads(comment[len(SIDECAR_PREFIX) :])
            except json.JSONDecodeError as e:
                raise PlyFormatError('comment', f'sidecar is not valid JSON ({e})')
    raise PlyFormatError('comment', 'sidecar comment missing')


def _columns(ply: PlyData, element: str, names: List[str]) -> np.ndarray:
    try:
        data = ply[element].data
    except KeyError:
        raise PlyFormatError(element, 'element missing')

    present = data.dtype.names or ()
    missing = [name for name in names if name not in present]
    if missing:
        raise PlyFormatError(element, f'missing properties {", ".join(missing)}')

    columns = np.stack([np.asarray(data[name], dtype=np.float64) for name in names], axis=1)
    if not np.isfinite(columns).all():
        row = int(np.nonzero(~np.isfinite(columns).all(axis=1))[0][0])
        raise PlyFormatError(element, f'non-finite value in row {row}')
    return columns


def read_ply(payload: bytes) -> GaussianScene:
    try:
        ply = PlyData.read(io.BytesIO(payload))
    except (PlyParseError, ValueError, EOFError) as e:
        raise PlyFormatError('header', str(e))

    sidecar = _read_sidecar(ply)
    raw = _columns(ply, 'vertex', RAW_PROPERTIES)
    positions = _columns(ply, 'anchor', ['x', 'y', 'z'])
    if len(raw) == 0 or len(positions) == 0:
        raise PlyFormatError('vertex', 'scene is empty')

    k = int(sidecar['gaussians_per_anchor'])
    if len(raw) != k * len(positions):
        raise PlyFormatError('vertex', f'{len(raw)} vertices for {len(positions)} anchors at {k} per anchor')
    if 'anchor_id' not in (ply['vertex'].data.dtype.names or ()):
        raise PlyFormatError('vertex', 'missing properties anchor_id')
    anchor_ids = np.asarray(ply['vertex'].data['anchor_id'])
    if not np.array_equal(anchor_ids, np.arange(len(raw)) // k):
        raise PlyFormatError('vertex', 'anchor_id column is not anchor-major')

    anchors = AnchorSet(
        positions=torch.from_numpy(positions),
        source_count=int(sidecar['source_count']),
        normalization=SceneNormalization.from_dict(sidecar['normalization']),
        feature_dim=0,
        voxel_size=float(sidecar['voxel_size']),
        seed_index=int(sidecar.get('seed', 0)),
    )
    assert raw.shape[1] == RAW_DIM
    return GaussianScene(
        anchors=anchors,
        raw=torch.from_numpy(raw),
        gaussians_per_anchor=k,
        offset_bound=float(sidecar['offset_bound']),
        scale_min=float(sidecar['scale_min']),
        scale_max=float(sidecar['scale_max']),
    )


def save_scene(path: Path, scene: GaussianScene):
    write_bytes(path, write_ply(scene))


def load_scene_ply(path: Path) -> GaussianScene:
    logger.debug(f'Read scene {path}')
    return read_ply(read_bytes(path))
