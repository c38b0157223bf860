"""
ASPL checkpoint container.

Layout: magic b'ASPL', u32 format version, u32 header length, UTF-8 JSON header, then the raw little-endian tensor
payloads in header order. The header lists every tensor (name, shape, dtype), the section tag and free-form metadata
(config, step, loss trace, optimizer param groups).
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from torch import nn

from anchorsplat.__version__ import __checkpoint_format_version__
from anchorsplat.errors import CheckpointFormatError, MissingCheckpointError
from anchorsplat.file_utils import read_bytes, write_bytes

logger = logging.getLogger(__name__)

MAGIC = b'ASPL'

_DTYPES: Dict[str, str] = {'float64': '<f8', 'float32': '<f4', 'int64': '<i8'}
_TORCH_NAMES: Dict[torch.dtype, str] = {torch.float64: 'float64', torch.float32: 'float32', torch.int64: 'int64'}

OPTIMIZER_PREFIX = 'optim.'


class Checkpoint:
    section: str
    tensors: Dict[str, torch.Tensor]
    meta: Dict[str, Any]

    def __init__(self, *, section: str, tensors: Dict[str, torch.Tensor], meta: Optional[Dict[str, Any]] = None):
        self.section = section
        self.tensors = tensors
        self.meta = meta or {}

    def module_state(self) -> Dict[str, torch.Tensor]:
        return {name: t for name, t in self.tensors.items() if not name.startswith(OPTIMIZER_PREFIX)}

    def optimizer_state(self) -> Optional[Dict[str, Any]]:
        if 'param_groups' not in self.meta:
            return None
        state: Dict[int, Dict[str, torch.Tensor]] = {}
        for name, tensor in self.tensors.items():
            if name.startswith(OPTIMIZER_PREFIX):
                index, key = name[len(OPTIMIZER_PREFIX) :].split('.', 1)
                state.setdefault(int(index), {})[key] = tensor
        return {'state': state, 'param_groups': self.meta['param_groups']}


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    entries: List[Dict[str, Any]] = []
    blobs: List[bytes] = []
    for name, tensor in checkpoint.tensors.items():
        tensor = tensor.detach().contiguous()
        dtype_name = _TORCH_NAMES.get(tensor.dtype)
        if dtype_name is None:
            raise CheckpointFormatError(None, f'unsupported dtype {tensor.dtype} for {name}')
        entries.append({'dtype': dtype_name, 'name': name, 'shape': list(tensor.shape)})
        blobs.append(tensor.numpy().astype(_DTYPES[dtype_name]).tobytes())

    header = json.dumps(
        {'meta': checkpoint.meta, 'section': checkpoint.section, 'tensors': entries}, sort_keys=True
    ).encode('utf8')
    prefix = MAGIC + struct.pack('<II', __checkpoint_format_version__, len(header))
    return prefix + header + b''.join(blobs)


def decode_checkpoint(payload: bytes, path: Optional[Path] = None) -> Checkpoint:
    if len(payload) < 12 or payload[:4] != MAGIC:
        raise CheckpointFormatError(path, 'missing ASPL magic bytes')
    version, length = struct.unpack_from('<II', payload, 4)
    if version != __checkpoint_format_version__:
        raise CheckpointFormatError(path, f'unsupported format version {version}')

    try:
        header = json.loads(payload[12 : 12 + length].decode('utf8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(path, f'header is not valid JSON ({e})')

    offset = 12 + length
    tensors: Dict[str, torch.Tensor] = {}
    for entry in header['tensors']:
        dtype = np.dtype(_DTYPES[entry['dtype']])
        count = int(np.prod(entry['shape'], dtype=np.int64))
        end = offset + count * dtype.itemsize
        if end > len(payload):
            raise CheckpointFormatError(path, f'truncated tensor {entry["name"]}')
        array = np.frombuffer(payload[offset:end], dtype=dtype).reshape(entry['shape'])
        tensors[entry['name']] = torch.from_numpy(array.astype(dtype.newbyteorder('=')))
        offset = end
    if offset != len(payload):
        raise CheckpointFormatError(path, f'{len(payload) - offset} trailing bytes')

    return Checkpoint(section=header['section'], tensors=tensors, meta=header['meta'])


def save_checkpoint(path: Path, checkpoint: Checkpoint):
    write_bytes(path, encode_checkpoint(checkpoint))
    logger.debug(f'Saved {checkpoint.section} checkpoint to {path}')


def load_checkpoint(path: Path, section: str) -> Checkpoint:
    if not path.exists():
        raise MissingCheckpointError(section)
    checkpoint = decode_checkpoint(read_bytes(path), path)
    if checkpoint.section != section:
        raise CheckpointFormatError(path, f'expected a {section} checkpoint, found {checkpoint.section}')
    return checkpoint


def module_checkpoint(
    section: str,
    module: nn.Module,
    meta: Dict[str, Any],
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> Checkpoint:
    tensors: Dict[str, torch.Tensor] = dict(module.state_dict())
    meta = dict(meta)
    if optimizer is not None:
        state = optimizer.state_dict()
        for index in sorted(state['state']):
            for key, value in sorted(state['state'][index].items()):
                tensors[f'{OPTIMIZER_PREFIX}{index}.{key}'] = torch.as_tensor(value)
        meta['param_groups'] = state['param_groups']
    return Checkpoint(section=section, tensors=tensors, meta=meta)


def restore_module(module: nn.Module, checkpoint: Checkpoint):
    try:
        module.load_state_dict(checkpoint.module_state())
    except RuntimeError as e:
        raise CheckpointFormatError(None, f'weights do not fit the configured network ({e})')
