"""Contiguous block decomposition of a decision vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlockPartition:
    """Split of R^m into ``n`` contiguous blocks; block ``i`` is owned by processor ``i``.

    Block indices are 0-based throughout the package.
    """

    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) == 0:
            raise ValueError("a partition needs at least one block")
        if any(int(s) < 1 for s in self.sizes):
            raise ValueError(f"every block size must be >= 1, got {self.sizes}")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def m(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    def block(self, i: int) -> slice:
        self.check_index(i)
        lo = self.offsets[i]
        return slice(lo, lo + self.sizes[i])

    def blocks(self) -> list[slice]:
        return [self.block(i) for i in range(self.n)]

    def check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"block index {i} out of range for {self.n} blocks")


def make_partition(m: int, n: int | None = None, sizes=None) -> BlockPartition:
    """Build a partition of ``m`` coordinates.

    Exactly one of ``n`` (equal split) or ``sizes`` (explicit) must be given.
    An equal split makes the first ``m % n`` blocks one element larger.
    """
    if (n is None) == (sizes is None):
        raise ValueError("give exactly one of n (equal split) or sizes (explicit)")
    if m < 1:
        raise ValueError(f"dimension must be positive, got {m}")
    if n is not None:
        if n < 1:
            raise ValueError(f"processor count must be positive, got {n}")
        if n > m:
            raise ValueError(f"cannot split {m} coordinates into {n} non-empty blocks")
        base, extra = divmod(m, n)
        return BlockPartition(tuple(base + 1 if k < extra else base for k in range(n)))
    part = BlockPartition(tuple(sizes))
    if part.m != m:
        raise ValueError(f"block sizes sum to {part.m}, expected {m}")
    return part


def block_view(partition: BlockPartition, x, i: int) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (partition.m,):
        raise ValueError(f"point has shape {x.shape}, partition expects ({partition.m},)")
    return x[partition.block(i)]
