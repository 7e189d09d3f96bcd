"""Parameter-free Style Projection and companion transforms, losses and codec."""

from .metrics import (
    LossReport,
    LossWeights,
    content_loss,
    gram,
    gram_distance,
    kl_loss,
    rank_correlation,
    style_loss,
    total_loss,
)
from .pyramid import Pyramid, decode, encode, transform_in_pyramid
from .tensor import FeatureMap, RankIndex, ShapeError, argsort_channels, channel_stats, flatten, unflatten
from .transforms import (
    Method,
    TransformMethod,
    adain_transform,
    apply_method,
    random_shuffle,
    style_project,
    style_project_quantile,
    style_swap,
    wct_transform,
    whiten,
)

__all__ = [
    "FeatureMap",
    "LossReport",
    "LossWeights",
    "Method",
    "Pyramid",
    "RankIndex",
    "ShapeError",
    "TransformMethod",
    "adain_transform",
    "apply_method",
    "argsort_channels",
    "channel_stats",
    "content_loss",
    "decode",
    "encode",
    "flatten",
    "gram",
    "gram_distance",
    "kl_loss",
    "random_shuffle",
    "rank_correlation",
    "style_loss",
    "style_project",
    "style_project_quantile",
    "style_swap",
    "total_loss",
    "transform_in_pyramid",
    "unflatten",
    "wct_transform",
    "whiten",
]
