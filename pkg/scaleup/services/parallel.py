from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Named substreams: every consumer of randomness derives its own generator from
# (seed, stream, *indices), so results never depend on scheduling or thread count.
STREAM_SIZES = 0
STREAM_DEGREES = 1
STREAM_RESPONSES = 2
STREAM_BLOCKS = 3
STREAM_SAMPLES = 4
STREAM_ORACLE = 5


def substream(seed: int, stream: int, *indices: int) -> np.random.Generator:
    """Independent generator for (seed, stream, *indices)."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream, *indices))
    return np.random.default_rng(sequence)


def map_ordered(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Apply `func` to every item, in parallel when threads > 1; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
