"""Deterministic step schedules shared by fitting and training."""
from typing import List, Sequence, Tuple, TypeVar

T = TypeVar('T')


def round_robin(items: Sequence[T], per_step: int, step: int) -> List[T]:
    """The per_step items used at a step, cycling through items in order."""
    count = min(per_step, len(items))
    start = step * count
    return [items[(start + i) % len(items)] for i in range(count)]


def scene_round_robin(scene_count: int, step: int) -> Tuple[int, int]:
    """(scene index, step within that scene) when several scenes take turns one step at a time."""
    return step % scene_count, step // scene_count


def uniform_subset(items: Sequence[T], count: int) -> List[T]:
    """count items spread evenly over the sequence, first item always included."""
    n = len(items)
    return [items[i * n // count] for i in range(min(count, n))]
