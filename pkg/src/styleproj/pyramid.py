"""Invertible Laplacian-style pyramid used as a training-free encoder/decoder.

Level k holds the band-pass detail at scale 2**k; the last level is the
low-pass residual. ``decode(encode(m))`` reproduces ``m`` up to rounding.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import FeatureMap, ShapeError
from .transforms import Method, TransformMethod, apply_method, style_project_quantile

_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _half(n: int) -> int:
    return (n + 1) // 2


@dataclass(frozen=True)
class Pyramid:
    """Levels from finest band (index 0) to the low-pass residual (last)."""

    levels: tuple[FeatureMap, ...]

    def __post_init__(self) -> None:
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ShapeError("a pyramid needs at least one level")
        c = levels[0].channels
        for k, (fine, coarse) in enumerate(zip(levels, levels[1:])):
            if coarse.channels != c or fine.channels != c:
                raise ShapeError(f"level {k + 1} has a different channel count")
            if (coarse.height, coarse.width) != (_half(fine.height), _half(fine.width)):
                raise ShapeError(
                    f"level {k + 1} is {coarse.height}x{coarse.width}, expected "
                    f"{_half(fine.height)}x{_half(fine.width)} from level {k}"
                )

    @property
    def depth(self) -> int:
        """Number of band-pass levels (the residual is not counted)."""
        return len(self.levels) - 1

    @property
    def residual(self) -> FeatureMap:
        return self.levels[-1]

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self) -> Iterator[FeatureMap]:
        return iter(self.levels)

    def __getitem__(self, k: int) -> FeatureMap:
        return self.levels[k]


def _blur_axis(x: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * x.ndim
    pad[axis] = (2, 2)
    padded = np.pad(x, pad, mode="edge")
    n = x.shape[axis]
    out = np.zeros_like(x)
    for i, w in enumerate(_KERNEL):
        out += w * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def _reduce(x: np.ndarray) -> np.ndarray:
    """Smooth with the separable 5-tap kernel and keep every second sample from index 0."""
    return _blur_axis(_blur_axis(x, 1), 2)[:, ::2, ::2]


def _expand_axis(x: np.ndarray, axis: int, length: int) -> np.ndarray:
    # even outputs copy the coarse sample; odd outputs average the two neighbours
    nxt = np.concatenate([np.take(x, np.arange(1, x.shape[axis]), axis=axis),
                          np.take(x, [-1], axis=axis)], axis=axis)
    mid = (x + nxt) / 2
    stacked = np.stack([x, mid], axis=axis + 1)
    shape = list(x.shape)
    shape[axis] *= 2
    return np.take(stacked.reshape(shape), np.arange(length), axis=axis)


def _expand(x: np.ndarray, height: int, width: int) -> np.ndarray:
    return _expand_axis(_expand_axis(x, 1, height), 2, width)


def encode(m: FeatureMap, depth: int) -> Pyramid:
    """Split ``m`` into ``depth`` band-pass levels plus a low-pass residual."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if 2 ** (depth - 1) > min(m.height, m.width):
        raise ShapeError(f"depth {depth} is too large for a {m.height}x{m.width} map")
    levels = []
    g = m.data
    for _ in range(depth):
        low = _reduce(g)
        levels.append(FeatureMap(g - _expand(low, g.shape[1], g.shape[2])))
        g = low
    levels.append(FeatureMap(g))
    return Pyramid(tuple(levels))


def decode(p: Pyramid) -> FeatureMap:
    """Invert :func:`encode`: expand the residual and add bands back, coarse to fine."""
    if not isinstance(p, Pyramid):
        p = Pyramid(tuple(p))
    g = p.residual.data
    for band in reversed(p.levels[:-1]):
        g = band.data + _expand(g, band.height, band.width)
    return FeatureMap(g)


def transform_in_pyramid(
    content: FeatureMap,
    style: FeatureMap,
    method: TransformMethod,
    depth: int,
    include_residual: bool = True,
) -> FeatureMap:
    """Encode both maps, apply ``method`` level by level, and decode.

    Style Projection falls back to the quantile variant on levels whose spatial
    sizes differ. Random shuffling uses ``seed + level`` so levels are shuffled
    independently. With ``include_residual=False`` the content residual is kept.
    """
    pc, ps = encode(content, depth), encode(style, depth)
    last = len(pc) - 1
    fused = []
    for k, (a, b) in enumerate(zip(pc, ps)):
        if k == last and not include_residual:
            fused.append(a)
        elif method.tag is Method.STYLE_PROJECTION and a.size != b.size:
            fused.append(style_project_quantile(a, b))
        elif method.tag is Method.RANDOM_SHUFFLE:
            fused.append(apply_method(dataclasses.replace(method, seed=method.seed + k), a, b))
        else:
            fused.append(apply_method(method, a, b))
    return decode(Pyramid(tuple(fused)))
