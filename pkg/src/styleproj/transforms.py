"""Feature-level content/style transforms.

Style Projection is the main operation; AdaIN, WCT, StyleSwap and the shuffling
variants are the baselines it is compared against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import (
    FeatureMap,
    ShapeError,
    channel_stats,
    flatten,
    map_channel_blocks,
    stable_argsort,
    unflatten,
)

DEFAULT_EIGEN_FLOOR = 1e-8
DEFAULT_PATCH = 3
DEFAULT_STRIDE = 1
_SYMMETRY_TOL = 1e-10
_SWAP_CHUNK = 1 << 22  # max entries of one score block


class Method(str, enum.Enum):
    STYLE_PROJECTION = "style-projection"
    ADAIN = "adain"
    WCT = "wct"
    STYLE_SWAP = "style-swap"
    RANDOM_SHUFFLE = "random-shuffle"
    NO_SHUFFLE = "no-shuffle"
    IDENTITY = "identity"


@dataclass(frozen=True)
class TransformMethod:
    """A transform plus its parameters. Unused parameters are ignored by other methods."""

    tag: Method = Method.STYLE_PROJECTION
    patch: int = DEFAULT_PATCH
    stride: int = DEFAULT_STRIDE
    seed: int = 0
    shared: bool = False
    eigen_floor: float = DEFAULT_EIGEN_FLOOR

    def __post_init__(self) -> None:
        object.__setattr__(self, "tag", Method(self.tag))
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"patch size must be a positive odd integer, got {self.patch}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not (self.eigen_floor > 0 and np.isfinite(self.eigen_floor)):
            raise ValueError(f"eigen_floor must be a positive finite number, got {self.eigen_floor}")

    @classmethod
    def parse(cls, name: str, **params) -> TransformMethod:
        try:
            tag = Method(name.strip().lower().replace("_", "-"))
        except ValueError:
            choices = ", ".join(m.value for m in Method)
            raise ValueError(f"unknown method {name!r} (choose from {choices})") from None
        return cls(tag, **params)


def _check_channels(content: FeatureMap, style: FeatureMap) -> None:
    if content.channels != style.channels:
        raise ShapeError(
            f"channel count mismatch: content has {content.channels}, style has {style.channels}"
        )


def style_project(content: FeatureMap, style: FeatureMap, threads: int | None = None) -> FeatureMap:
    """Rearrange each style channel so its ranks follow the content channel.

    The style value of rank r lands where the content value of rank r sits.
    Content ties are ordered by spatial index. Both maps must have the same
    number of spatial positions; see :func:`style_project_quantile` otherwise.
    """
    _check_channels(content, style)
    if content.size != style.size:
        raise ShapeError(
            f"spatial size mismatch ({content.height}x{content.width} vs "
            f"{style.height}x{style.width}); use style_project_quantile for unequal sizes"
        )
    x, y = flatten(content), flatten(style)
    out = np.empty_like(x)

    def work(rows: slice) -> None:
        for r in range(rows.start, rows.stop):
            out[r, stable_argsort(x[r])] = np.sort(y[r])

    map_channel_blocks(work, content.channels, threads)
    return unflatten(out, content.height, content.width)


def style_project_quantile(content: FeatureMap, style: FeatureMap, threads: int | None = None) -> FeatureMap:
    """Style Projection for unequal spatial sizes.

    The content position of rank r (out of V_c) receives the style channel's
    empirical quantile at level r / (V_c - 1), linearly interpolated between
    neighbouring sorted style values. With V_c == V_s this is exactly
    :func:`style_project`. A single-position content map gets the style median.
    """
    _check_channels(content, style)
    x, y = flatten(content), flatten(style)
    vc, vs = x.shape[1], y.shape[1]
    if vc == 1:
        return unflatten(np.median(y, axis=1, keepdims=True), content.height, content.width)

    pos = np.arange(vc, dtype=np.float64) * (vs - 1) / (vc - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), max(vs - 2, 0))
    hi = np.minimum(lo + 1, vs - 1)
    frac = pos - lo
    exact = frac == 0.0
    out = np.empty_like(x)

    def work(rows: slice) -> None:
        ys = np.sort(y[rows], axis=1)
        a, b = ys[:, lo], ys[:, hi]
        vals = np.where(exact, a, a + frac * (b - a))
        for i, r in enumerate(range(rows.start, rows.stop)):
            out[r, stable_argsort(x[r])] = vals[i]

    map_channel_blocks(work, content.channels, threads)
    return unflatten(out, content.height, content.width)


def adain_transform(content: FeatureMap, style: FeatureMap) -> FeatureMap:
    """Per-channel affine map of content onto the style mean and standard deviation.

    A constant content channel maps to the constant style mean.
    """
    _check_channels(content, style)
    x = flatten(content)
    mu_c, sig_c = channel_stats(content)
    mu_s, sig_s = channel_stats(style)
    safe = np.where(sig_c > 0, sig_c, 1.0)
    normed = np.where((sig_c > 0)[:, None], (x - mu_c[:, None]) / safe[:, None], 0.0)
    return unflatten(normed * sig_s[:, None] + mu_s[:, None], content.height, content.width)


def _covariance_eigh(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Channel mean, and eigenvalues/eigenvectors of the population covariance."""
    mu = flat.mean(axis=1)
    centered = flat - mu[:, None]
    cov = centered @ centered.T / flat.shape[1]
    scale = max(float(np.abs(cov).max()), 1.0)
    if np.abs(cov - cov.T).max() > _SYMMETRY_TOL * scale:
        raise ArithmeticError("channel covariance is not symmetric")
    evals, evecs = np.linalg.eigh((cov + cov.T) / 2)
    if not np.isfinite(evals).all():
        raise ArithmeticError("covariance eigendecomposition produced non-finite eigenvalues")
    return mu, evals, evecs


def _check_wct_sizes(content: FeatureMap, style: FeatureMap) -> None:
    if content.size < 2 or style.size < 2:
        raise ShapeError("WCT needs at least 2 spatial positions in both maps")


def whiten(content: FeatureMap, eigen_floor: float = DEFAULT_EIGEN_FLOOR) -> FeatureMap:
    """Center and decorrelate channels: the whitening half of WCT.

    Eigenvalues below ``eigen_floor`` are raised to it before the inverse square root.
    """
    if content.size < 2:
        raise ShapeError("whitening needs at least 2 spatial positions")
    x = flatten(content)
    mu, evals, evecs = _covariance_eigh(x)
    inv_sqrt = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, eigen_floor))) @ evecs.T
    return unflatten(inv_sqrt @ (x - mu[:, None]), content.height, content.width)


def wct_transform(
    content: FeatureMap, style: FeatureMap, eigen_floor: float = DEFAULT_EIGEN_FLOOR
) -> FeatureMap:
    """Whitening-coloring transform: impose the style channel covariance and means on content."""
    _check_channels(content, style)
    _check_wct_sizes(content, style)
    if not eigen_floor > 0:
        raise ValueError("eigen_floor must be positive")
    white = flatten(whiten(content, eigen_floor))
    mu_s, evals, evecs = _covariance_eigh(flatten(style))
    color = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    return unflatten(color @ white + mu_s[:, None], content.height, content.width)


def _patch_origins(length: int, patch: int, stride: int) -> np.ndarray:
    starts = list(range(0, length - patch + 1, stride))
    if starts[-1] != length - patch:
        starts.append(length - patch)  # keep the trailing border covered
    return np.asarray(starts, dtype=np.int64)


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)


def style_swap(
    content: FeatureMap,
    style: FeatureMap,
    patch: int = DEFAULT_PATCH,
    stride: int = DEFAULT_STRIDE,
) -> FeatureMap:
    """Replace every content patch by its most correlated style patch.

    Content patches are tiled with ``stride`` (the last row/column of patches is
    always included); style candidates are every ``patch x patch`` window.
    Correlation is the cosine between flattened all-channel patches, a zero-norm
    patch scores 0, and ties go to the lowest style index in row-major order.
    Overlapping replacements are averaged.
    """
    _check_channels(content, style)
    if patch < 1 or patch % 2 == 0:
        raise ValueError(f"patch size must be a positive odd integer, got {patch}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if patch > min(content.height, content.width, style.height, style.width):
        raise ShapeError(f"patch size {patch} exceeds the smaller map dimension")

    c = content.channels
    # (C, i, j, p, p) -> (i, j, C, p, p) so row-major patch index follows (i, j)
    s_win = sliding_window_view(style.data, (patch, patch), axis=(1, 2))
    s_patches = s_win.transpose(1, 2, 0, 3, 4).reshape(-1, c * patch * patch)
    s_unit = _unit_rows(s_patches)

    ys = _patch_origins(content.height, patch, stride)
    xs = _patch_origins(content.width, patch, stride)
    c_win = sliding_window_view(content.data, (patch, patch), axis=(1, 2))[:, ys][:, :, xs]
    c_patches = c_win.transpose(1, 2, 0, 3, 4).reshape(-1, c * patch * patch)
    c_unit = _unit_rows(c_patches)

    best = np.empty(len(c_patches), dtype=np.int64)
    step = max(1, _SWAP_CHUNK // max(1, len(s_unit)))
    for start in range(0, len(c_unit), step):
        scores = c_unit[start:start + step] @ s_unit.T
        best[start:start + step] = np.argmax(scores, axis=1)

    chosen = s_patches[best].reshape(-1, c, patch, patch)
    oy, ox = np.meshgrid(ys, xs, indexing="ij")
    oy, ox = oy.ravel(), ox.ravel()
    out = np.zeros(content.shape)
    count = np.zeros(content.shape[1:])
    # for a fixed offset each origin maps to a distinct pixel, so plain fancy += is exact
    for di in range(patch):
        for dj in range(patch):
            out[:, oy + di, ox + dj] += chosen[:, :, di, dj].T
            count[oy + di, ox + dj] += 1
    return FeatureMap(out / count)


def random_shuffle(style: FeatureMap, seed: int = 0, shared: bool = False) -> FeatureMap:
    """Shuffle spatial positions of ``style``.

    ``shared=False`` draws an independent permutation per channel; ``shared=True``
    applies one permutation to every channel, which leaves the Gram matrix unchanged.
    """
    rng = np.random.default_rng(seed)
    y = flatten(style)
    if shared:
        out = y[:, rng.permutation(style.size)]
    else:
        out = rng.permuted(y, axis=1)
    return unflatten(out, style.height, style.width)


def apply_method(method: TransformMethod, content: FeatureMap, style: FeatureMap) -> FeatureMap:
    tag = method.tag
    if tag is Method.STYLE_PROJECTION:
        return style_project(content, style)
    if tag is Method.ADAIN:
        return adain_transform(content, style)
    if tag is Method.WCT:
        return wct_transform(content, style, method.eigen_floor)
    if tag is Method.STYLE_SWAP:
        return style_swap(content, style, method.patch, method.stride)
    if tag is Method.RANDOM_SHUFFLE:
        _check_channels(content, style)
        return random_shuffle(style, method.seed, method.shared)
    if tag is Method.NO_SHUFFLE:
        _check_channels(content, style)
        return style
    if tag is Method.IDENTITY:
        return content
    raise ValueError(f"unhandled method {tag}")
