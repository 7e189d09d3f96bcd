"""Gram statistics and the style / content / KL losses used to score stylizations."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .tensor import FeatureMap, ShapeError, argsort_channels, channel_stats, flatten

DEFAULT_LAMBDA = 10.0
DEFAULT_KAPPA = 2.5
DEFAULT_KL_BINS = 256
DEFAULT_KL_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    lambda_style: float = DEFAULT_LAMBDA
    kappa_kl: float = DEFAULT_KAPPA

    def __post_init__(self) -> None:
        for name in ("lambda_style", "kappa_kl"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class LossReport:
    style: float
    content: float
    kl: float
    gram_distance: float
    total: float

    def to_text(self, header: str | None = None) -> str:
        """Flat ``name=value`` lines, 9 significant digits in scientific notation."""
        lines = [f"# {header}"] if header else []
        lines += [f"{f.name}={getattr(self, f.name):.8e}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> LossReport:
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = float(value)
        return cls(**{f.name: values[f.name] for f in fields(cls)})


def gram(m: FeatureMap) -> np.ndarray:
    """Unnormalized Gram matrix: inner products between channels over all positions."""
    flat = flatten(m)
    g = flat @ flat.T
    return (g + g.T) / 2


def gram_distance(a: FeatureMap, b: FeatureMap) -> float:
    """Squared Frobenius norm of the Gram difference. Spatial sizes may differ."""
    if a.channels != b.channels:
        raise ShapeError(f"channel count mismatch: {a.channels} vs {b.channels}")
    diff = gram(a) - gram(b)
    return float(np.sum(diff * diff))


def _check_pyramids(a: Sequence[FeatureMap], b: Sequence[FeatureMap]) -> None:
    if len(a) != len(b):
        raise ShapeError(f"level count mismatch: {len(a)} vs {len(b)}")
    for k, (la, lb) in enumerate(zip(a, b)):
        if la.channels != lb.channels:
            raise ShapeError(f"level {k}: channel mismatch {la.channels} vs {lb.channels}")


def style_loss(style: Sequence[FeatureMap], stylized: Sequence[FeatureMap]) -> float:
    """Sum over levels of ||mean_s - mean_z||_2 + ||std_s - std_z||_2.

    Mean and standard deviation vectors are compared separately and the two
    distances added (not a single norm over the concatenated vector).
    """
    _check_pyramids(style, stylized)
    total = 0.0
    for ls, lz in zip(style, stylized):
        mu_s, sig_s = channel_stats(ls)
        mu_z, sig_z = channel_stats(lz)
        total += float(np.linalg.norm(mu_s - mu_z)) + float(np.linalg.norm(sig_s - sig_z))
    return total


def content_loss(content_features: FeatureMap, stylized_features: FeatureMap) -> float:
    """Euclidean norm of the elementwise difference."""
    if content_features.shape != stylized_features.shape:
        raise ShapeError(
            f"shape mismatch: {content_features.shape} vs {stylized_features.shape}"
        )
    return float(np.linalg.norm((content_features.data - stylized_features.data).ravel()))


def pyramid_content_loss(content: Sequence[FeatureMap], stylized: Sequence[FeatureMap]) -> float:
    """Euclidean norm over all levels taken together."""
    _check_pyramids(content, stylized)
    return math.sqrt(sum(content_loss(a, b) ** 2 for a, b in zip(content, stylized)))


def rank_correlation(reference: FeatureMap, candidate: FeatureMap) -> np.ndarray:
    """Per-channel Spearman correlation of ordinal ranks.

    Reference ties are ordered by spatial index. Candidate ties are ordered by
    the reference rank, so a candidate that is non-decreasing along the
    reference order scores exactly 1 even when it repeats values.
    """
    if reference.shape != candidate.shape:
        raise ShapeError(f"shape mismatch: {reference.shape} vs {candidate.shape}")
    v = reference.size
    if v == 1:
        return np.ones(reference.channels)
    ref_rank = argsort_channels(reference)[0].ranks()
    out = np.empty(reference.channels)
    for c, (cand, rr) in enumerate(zip(flatten(candidate), ref_rank)):
        cand_rank = np.empty(v, dtype=np.int64)
        cand_rank[np.lexsort((rr, cand))] = np.arange(v)
        d = (cand_rank - rr).astype(np.float64)
        out[c] = 1.0 - 6.0 * float(d @ d) / (v * (v * v - 1.0))
    return out


def _histograms(x: np.ndarray, y: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray] | None:
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if lo == hi:
        return None
    hx, _ = np.histogram(x, bins=bins, range=(lo, hi))
    hy, _ = np.histogram(y, bins=bins, range=(lo, hi))
    return hx.astype(np.float64), hy.astype(np.float64)


def _smoothed(counts: np.ndarray, eps: float) -> np.ndarray:
    p = counts / counts.sum() + eps
    return p / p.sum()


def kl_loss(
    content_features: FeatureMap,
    stylized_features: FeatureMap,
    bins: int = DEFAULT_KL_BINS,
    epsilon: float = DEFAULT_KL_EPS,
) -> float:
    """KL(content || stylized) between smoothed per-channel value histograms, summed over channels.

    Each channel pair is binned over the shared [min, max] of both maps. A
    channel pair whose values are all one number contributes 0.
    """
    if content_features.channels != stylized_features.channels:
        raise ShapeError(
            f"channel count mismatch: {content_features.channels} vs {stylized_features.channels}"
        )
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    total = 0.0
    for x, y in zip(flatten(content_features), flatten(stylized_features)):
        hist = _histograms(x, y, bins)
        if hist is None:
            continue
        p, q = _smoothed(hist[0], epsilon), _smoothed(hist[1], epsilon)
        total += float(np.sum(p * np.log(p / q)))
    # rounding can leave a tiny negative residue when p and q nearly coincide
    return max(total, 0.0)


def pyramid_kl_loss(
    content: Sequence[FeatureMap],
    stylized: Sequence[FeatureMap],
    bins: int = DEFAULT_KL_BINS,
    epsilon: float = DEFAULT_KL_EPS,
) -> float:
    _check_pyramids(content, stylized)
    return sum(kl_loss(a, b, bins, epsilon) for a, b in zip(content, stylized))


def total_loss(
    content: float,
    style: float,
    kl: float,
    gram_dist: float = 0.0,
    weights: LossWeights = LossWeights(),
) -> LossReport:
    """Combine component losses as content + lambda * style + kappa * kl."""
    total = content + weights.lambda_style * style + weights.kappa_kl * kl
    report = LossReport(style=style, content=content, kl=kl, gram_distance=gram_dist, total=total)
    for f in fields(report):
        if not math.isfinite(getattr(report, f.name)):
            raise ValueError(f"loss component {f.name} is not finite")
    return report
