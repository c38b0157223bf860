import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, Iterator, List, Optional, TypeVar

import numpy as np
import torch

from anchorsplat.__version__ import __version__

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

THREADS_ENV_VAR = 'ASPLAT_THREADS'

_workers = 1


def configure_threads(threads: Optional[int] = None) -> int:
    """
    Set the number of tile workers.

    Torch intra-op parallelism stays at one thread so every reduction runs in a fixed order and results are
    bit-identical whatever the worker count.
    """
    global _workers
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV_VAR, '1'))
    _workers = max(1, int(threads))
    torch.set_num_threads(1)
    logger.debug(f'Using {_workers} tile workers')
    return _workers


def workers() -> int:
    return _workers


def ordered_map(fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """Map over items, possibly in parallel, returning results in input order."""
    n = _workers if max_workers is None else max_workers
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=n) as executor:
        return list(executor.map(fn, items))


def seed_everything(seed: int) -> torch.Generator:
    torch.manual_seed(seed)
    return torch.Generator().manual_seed(seed)


def versions() -> Dict[str, str]:
    return {
        'anchorsplat': __version__,
        'python': platform.python_version(),
        'torch': torch.__version__,
        'numpy': np.__version__,
    }


class StageTimer:
    """Accumulates wall-clock seconds per named compute stage."""

    def __init__(self):
        self.seconds: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.seconds[name] = self.seconds.get(name, 0.0) + elapsed
            logger.debug(f'Stage {name} took {elapsed:.3f}s')

    @property
    def total(self) -> float:
        return sum(self.seconds.values())
