"""Dense C x H x W feature maps and the sort/permute primitives built on them."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

THREADS_ENV = "STYLEPROJ_THREADS"


class ShapeError(ValueError):
    """Raised when feature maps have incompatible shapes."""


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Immutable float64 feature map stored channel-major as ``(C, H, W)``."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True, order="C")
        if arr.ndim != 3:
            raise ShapeError(f"feature map must be 3-D (C, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"C, H and W must all be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature map contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, values, channels: int, height: int, width: int) -> FeatureMap:
        values = np.asarray(values, dtype=np.float64)
        if values.size != channels * height * width:
            raise ShapeError(
                f"expected {channels * height * width} values for "
                f"{channels}x{height}x{width}, got {values.size}"
            )
        return cls(values.reshape(channels, height, width))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        """Number of spatial positions V = H * W."""
        return self.height * self.width

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"FeatureMap(C={self.channels}, H={self.height}, W={self.width})"


@dataclass(frozen=True, eq=False)
class RankIndex:
    """Per-channel ascending order: ``order[c, r]`` is where channel c has its r-th smallest value."""

    order: np.ndarray

    @property
    def channels(self) -> int:
        return self.order.shape[0]

    def ranks(self) -> np.ndarray:
        """Inverse permutation: ``ranks()[c, p]`` is the rank of position p in channel c."""
        inv = np.empty_like(self.order)
        positions = np.broadcast_to(np.arange(self.order.shape[1]), self.order.shape)
        np.put_along_axis(inv, self.order, positions, axis=1)
        return inv


def flatten(m: FeatureMap) -> np.ndarray:
    """Return the ``C x V`` view of ``m`` (row-major spatial order per channel)."""
    return m.data.reshape(m.channels, m.size)


def unflatten(matrix: np.ndarray, height: int, width: int) -> FeatureMap:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[1] != height * width:
        raise ShapeError(f"cannot reshape {matrix.shape} to (C, {height}, {width})")
    return FeatureMap(matrix.reshape(matrix.shape[0], height, width))


def worker_count(channels: int) -> int:
    """Threads to use for per-channel work, capped by ``STYLEPROJ_THREADS``."""
    workers = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {cap!r}") from None
    return max(1, min(workers, channels))


def map_channel_blocks(fn: Callable[[slice], None], channels: int, threads: int | None = None) -> None:
    """Run ``fn`` over contiguous channel blocks, in parallel when allowed.

    ``fn`` writes into caller-owned disjoint rows, so scheduling cannot change results.
    """
    n = worker_count(channels) if threads is None else max(1, min(threads, channels))
    if n == 1:
        fn(slice(0, channels))
        return
    bounds = np.linspace(0, channels, n + 1).astype(int)
    blocks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=n) as pool:
        for fut in [pool.submit(fn, b) for b in blocks]:
            fut.result()


def stable_argsort(x: np.ndarray) -> np.ndarray:
    """Ascending argsort of a 1-D array with ties resolved to the lower index.

    Same result as ``np.argsort(x, kind="stable")`` but faster: an unstable sort
    is followed by an integer re-sort keyed on (run of equal values, index),
    done only when ties exist.
    """
    n = x.size
    order = np.argsort(x, kind="quicksort")
    vals = x[order]
    tied = vals[1:] == vals[:-1]
    if tied.any():
        run = np.zeros(n, dtype=np.int64)
        np.cumsum(~tied, out=run[1:])
        key = run * n + order
        key.sort()
        order = key % n
    return order


def stable_argsort_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise :func:`stable_argsort`; rows are handled one at a time to stay cache-resident."""
    order = np.empty(x.shape, dtype=np.int64)
    for r in range(x.shape[0]):
        order[r] = stable_argsort(x[r])
    return order


def argsort_channels(m: FeatureMap, threads: int | None = None) -> tuple[RankIndex, np.ndarray]:
    """Stable per-channel ascending sort. Returns the rank index and the sorted values."""
    flat = flatten(m)
    order = np.empty(flat.shape, dtype=np.int64)

    def work(rows: slice) -> None:
        order[rows] = stable_argsort_rows(flat[rows])

    map_channel_blocks(work, m.channels, threads)
    return RankIndex(order), np.take_along_axis(flat, order, axis=1)


def channel_stats(m: FeatureMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population standard deviation (divides by V)."""
    flat = flatten(m)
    mu = flat.mean(axis=1)
    sigma = np.sqrt(np.mean((flat - mu[:, None]) ** 2, axis=1))
    return mu, sigma
