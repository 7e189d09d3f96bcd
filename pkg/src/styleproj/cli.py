"""Command-line entry point: stylize, shuffle-study, evaluate, bench."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import imageio
from .imageio import ImageError, RasterImage
from .metrics import (
    DEFAULT_KL_BINS,
    DEFAULT_KL_EPS,
    LossReport,
    LossWeights,
    gram_distance,
    pyramid_content_loss,
    pyramid_kl_loss,
    style_loss,
    total_loss,
)
from .pyramid import encode, transform_in_pyramid
from .tensor import THREADS_ENV, FeatureMap, ShapeError
from .transforms import (
    DEFAULT_EIGEN_FLOOR,
    Method,
    TransformMethod,
    apply_method,
    random_shuffle,
    style_project,
    style_project_quantile,
)

PROG = "styleproj"
ENCODER_NAME = "laplacian-pyramid"


@dataclass(frozen=True)
class StylizeConfig:
    method: TransformMethod = field(default_factory=TransformMethod)
    depth: int = 3
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    include_residual: bool = True
    kl_bins: int = DEFAULT_KL_BINS
    kl_eps: float = DEFAULT_KL_EPS
    resize: tuple[int, int] | None = None
    center_crop: tuple[int, int] | None = None
    random_crop: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.kl_bins < 2:
            raise ValueError(f"kl-bins must be >= 2, got {self.kl_bins}")
        if not self.kl_eps > 0:
            raise ValueError(f"kl-eps must be positive, got {self.kl_eps}")
        if self.center_crop and self.random_crop:
            raise ValueError("--center-crop and --random-crop are mutually exclusive")

    def report_header(self) -> str:
        return (
            f"encoder={ENCODER_NAME} depth={self.depth} lambda={self.weights.lambda_style:g} "
            f"kappa={self.weights.kappa_kl:g} (pixel-domain codec, not comparable to VGG-based losses)"
        )


# ---------------------------------------------------------------------------
# pipeline pieces


def preprocess(img: RasterImage, config: StylizeConfig) -> RasterImage:
    if config.resize:
        img = imageio.resize_bilinear(img, *config.resize)
    if config.center_crop:
        img = imageio.center_crop(img, *config.center_crop)
    elif config.random_crop:
        img = imageio.random_crop(img, *config.random_crop, seed=config.seed)
    return img


def load_features(path: str | Path, config: StylizeConfig) -> FeatureMap:
    return imageio.to_feature_map(preprocess(imageio.load_image(path), config))


def evaluate_maps(
    content: FeatureMap, style: FeatureMap, stylized: FeatureMap, config: StylizeConfig
) -> LossReport:
    """Score ``stylized`` against content and style in the pyramid feature space."""
    if stylized.shape != content.shape:
        raise ShapeError(
            f"stylized image is {stylized.width}x{stylized.height}, "
            f"content is {content.width}x{content.height}; they must match"
        )
    pc, ps, pz = (encode(m, config.depth) for m in (content, style, stylized))
    report = total_loss(
        content=pyramid_content_loss(pc, pz),
        style=style_loss(ps, pz),
        kl=pyramid_kl_loss(pc, pz, config.kl_bins, config.kl_eps),
        gram_dist=gram_distance(ps[0], pz[0]),
        weights=config.weights,
    )
    expected = report.content + config.weights.lambda_style * report.style + config.weights.kappa_kl * report.kl
    if report.total != expected:
        raise ArithmeticError("loss report total does not match its components")
    return report


def _resolve_method(config: StylizeConfig) -> TransformMethod:
    return dataclasses.replace(config.method, seed=config.seed)


def cmd_stylize(content_path, style_path, out_path, config: StylizeConfig) -> LossReport:
    content = load_features(content_path, config)
    style = load_features(style_path, config)
    out = transform_in_pyramid(content, style, _resolve_method(config), config.depth, config.include_residual)
    image = imageio.from_feature_map(out)
    imageio.save_png(image, out_path)
    return evaluate_maps(content, style, imageio.to_feature_map(image), config)


SHUFFLE_STUDY_FILES = ("no_shuffling.png", "random_shuffling.png", "style_projection.png")


def shuffle_study_maps(content: FeatureMap, style: FeatureMap, seed: int) -> dict[str, FeatureMap]:
    """The three ablation modes, applied directly to the pixel planes.

    Working on pixels (rather than pyramid levels) keeps every mode a pure
    rearrangement of style pixels, so the outputs quantize back to style bytes.
    """
    if content.size == style.size:
        projected = style_project(content, style)
    else:
        projected = style_project_quantile(content, style)
    return {
        "no_shuffling.png": style,
        "random_shuffling.png": random_shuffle(style, seed=seed, shared=False),
        "style_projection.png": projected,
    }


def cmd_shuffle_study(content_path, style_path, out_dir, config: StylizeConfig) -> dict[str, Path]:
    content = load_features(content_path, config)
    style = load_features(style_path, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, fmap in shuffle_study_maps(content, style, config.seed).items():
        imageio.save_png(imageio.from_feature_map(fmap), out_dir / name)
        written[name] = out_dir / name
    return written


def cmd_evaluate(content_path, style_path, stylized_path, config: StylizeConfig) -> LossReport:
    content = load_features(content_path, config)
    style = load_features(style_path, config)
    stylized = imageio.to_feature_map(imageio.load_image(stylized_path))
    return evaluate_maps(content, style, stylized, config)


@dataclass(frozen=True)
class BenchRow:
    method: str
    channels: int
    height: int
    width: int
    median_s: float
    min_s: float
    checksum: str

    @property
    def positions(self) -> int:
        return self.height * self.width


def parse_size(text: str) -> tuple[int, int, int]:
    parts = text.lower().strip().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        dims = ()
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"invalid size {text!r}; expected CxHxW with positive integers")
    return dims  # type: ignore[return-value]


def bench_inputs(size: tuple[int, int, int], seed: int) -> tuple[FeatureMap, FeatureMap]:
    rng = np.random.default_rng(seed)
    return FeatureMap(rng.standard_normal(size)), FeatureMap(rng.standard_normal(size))


def cmd_bench(
    sizes: Sequence[tuple[int, int, int]],
    methods: Sequence[TransformMethod],
    repeats: int,
    seed: int = 0,
) -> list[BenchRow]:
    """Time each method on fixed-seed random inputs of each size.

    Repeats run round-robin over sizes so a transient slowdown of the machine
    is spread across all sizes instead of skewing one of them.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    rows = []
    for method in methods:
        inputs = [bench_inputs(size, seed) for size in sizes]
        times: list[list[float]] = [[] for _ in sizes]
        digests = []
        for content, style in inputs:
            out = apply_method(method, content, style)  # untimed warm-up
            digests.append(hashlib.sha256(out.data.tobytes()).hexdigest()[:16])
        for _ in range(repeats):
            for k, (content, style) in enumerate(inputs):
                t0 = time.perf_counter()
                apply_method(method, content, style)
                times[k].append(time.perf_counter() - t0)
        for size, ts, digest in zip(sizes, times, digests):
            rows.append(BenchRow(method.tag.value, *size, statistics.median(ts), min(ts), digest))
    return rows


def scaling_slope(rows: Sequence[BenchRow], method: str) -> float | None:
    """Least-squares slope of log(min time) against log(V) for one method."""
    picked = [r for r in rows if r.method == method]
    if len({r.positions for r in picked}) < 2:
        return None
    v = np.log([r.positions for r in picked])
    t = np.log([max(r.min_s, 1e-9) for r in picked])
    return float(np.polyfit(v, t, 1)[0])


def format_bench(rows: Sequence[BenchRow], csv: bool) -> str:
    header = ("method", "C", "H", "W", "V", "median_s", "min_s", "checksum")
    body = [
        (r.method, r.channels, r.height, r.width, r.positions, f"{r.median_s:.6f}", f"{r.min_s:.6f}", r.checksum)
        for r in rows
    ]
    if csv:
        lines = [",".join(header)] + [",".join(str(v) for v in row) for row in body]
    else:
        table = [tuple(str(v) for v in header)] + [tuple(str(v) for v in row) for row in body]
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table]
    for method in dict.fromkeys(r.method for r in rows):
        slope = scaling_slope(rows, method)
        if slope is not None:
            lines.append(f"# scaling_slope[{method}]={slope:.3f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument handling


def _dims(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"dimensions must be positive, got {text!r}")
    return w, h


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# config-file key -> (argparse dest, converter)
CONFIG_KEYS = {
    "method": ("method", str),
    "depth": ("depth", int),
    "lambda": ("lam", float),
    "kappa": ("kappa", float),
    "seed": ("seed", int),
    "resize": ("resize", _dims),
    "center-crop": ("center_crop", _dims),
    "random-crop": ("random_crop", _dims),
    "no-residual": ("no_residual", _bool),
    "kl-bins": ("kl_bins", int),
    "kl-eps": ("kl_eps", float),
    "patch": ("patch", int),
    "stride": ("stride", int),
    "eigen-floor": ("eigen_floor", float),
    "shared-shuffle": ("shared_shuffle", _bool),
    "sizes": ("sizes", str),
    "methods": ("methods", str),
    "repeats": ("repeats", int),
    "csv": ("csv", _bool),
}

DEFAULTS = {
    "method": Method.STYLE_PROJECTION.value,
    "depth": 3,
    "lam": 10.0,
    "kappa": 2.5,
    "seed": 0,
    "resize": None,
    "center_crop": None,
    "random_crop": None,
    "no_residual": False,
    "kl_bins": DEFAULT_KL_BINS,
    "kl_eps": DEFAULT_KL_EPS,
    "patch": 3,
    "stride": 1,
    "eigen_floor": DEFAULT_EIGEN_FLOOR,
    "shared_shuffle": False,
    "sizes": "16x64x64,16x90x91,16x128x128,16x181x181,16x256x256",
    "methods": "style-projection,adain",
    "repeats": 7,
    "csv": False,
}


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("_", "-")
        if not sep or key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unrecognized entry {raw.strip()!r}")
        dest, convert = CONFIG_KEYS[key]
        try:
            values[dest] = convert(value.strip())
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def _add_method_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--patch", type=int, metavar="N", help="StyleSwap patch size, odd (default 3)")
    p.add_argument("--stride", type=int, metavar="N", help="StyleSwap content patch stride (default 1)")
    p.add_argument("--eigen-floor", type=float, metavar="X",
                   help="WCT lower bound on covariance eigenvalues (default 1e-8)")
    p.add_argument("--shared-shuffle", action="store_const", const=True, default=None,
                   help="random-shuffle: one permutation for all channels instead of one per channel")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", metavar="NAME",
                   help="transform: " + ", ".join(m.value for m in Method) + " (default style-projection)")
    p.add_argument("--depth", type=int, metavar="N", help="pyramid depth, number of band levels (default 3)")
    p.add_argument("--lambda", dest="lam", type=float, metavar="X", help="style loss weight (default 10)")
    p.add_argument("--kappa", type=float, metavar="X", help="KL loss weight (default 2.5)")
    p.add_argument("--seed", type=int, metavar="N", help="seed for shuffling and random crops (default 0)")
    p.add_argument("--resize", type=_dims, metavar="WxH", help="bilinear resize of both inputs first")
    p.add_argument("--center-crop", type=_dims, metavar="WxH", help="center crop of both inputs after resizing")
    p.add_argument("--random-crop", type=_dims, metavar="WxH",
                   help="seeded random crop of both inputs after resizing")
    p.add_argument("--no-residual", action="store_const", const=True, default=None,
                   help="keep the content low-pass residual instead of transforming it")
    p.add_argument("--kl-bins", type=int, metavar="N", help="histogram bins for the KL loss (default 256)")
    p.add_argument("--kl-eps", type=float, metavar="X", help="histogram smoothing for the KL loss (default 1e-8)")
    p.add_argument("--config", metavar="PATH", help="flat key=value file; command-line flags take precedence")
    _add_method_params(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Training-free Style Projection stylization, ablations, losses and benchmarks.",
        epilog=f"Environment: {THREADS_ENV} caps the number of worker threads used per transform.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("stylize", help="stylize a content image with a style image",
                       description="Stylize CONTENT with STYLE in the pyramid domain and write a PNG. "
                                   "Prints a loss report for the written image.")
    p.add_argument("content", help="content image (PNG or JPEG)")
    p.add_argument("style", help="style image (PNG or JPEG)")
    p.add_argument("output", help="output PNG path")
    _add_common(p)

    p = sub.add_parser("shuffle-study", help="write the no/random shuffling and Style Projection ablation",
                       description="Write no_shuffling.png, random_shuffling.png and style_projection.png "
                                   "to OUT_DIR. The modes act on pixel planes directly; --method and "
                                   "--depth do not apply.")
    p.add_argument("content", help="content image (PNG or JPEG)")
    p.add_argument("style", help="style image (PNG or JPEG)")
    p.add_argument("out_dir", help="directory for the three PNGs")
    _add_common(p)

    p = sub.add_parser("evaluate", help="report losses of a stylized image",
                       description="Encode content, style and stylized images with the pyramid codec and "
                                   "print style, content, kl, gram_distance and total as name=value lines.")
    p.add_argument("content", help="content image (PNG or JPEG)")
    p.add_argument("style", help="style image (PNG or JPEG)")
    p.add_argument("stylized", help="stylized image, same size as the preprocessed content")
    _add_common(p)

    p = sub.add_parser("bench", help="time transform kernels",
                       description="Time transforms on fixed-seed random feature maps and report the "
                                   "median and minimum wall time per method and size.")
    p.add_argument("--sizes", metavar="LIST",
                   help="comma-separated CxHxW sizes (default 16x64x64,16x90x91,16x128x128,16x181x181,16x256x256)")
    p.add_argument("--methods", metavar="LIST", help="comma-separated method names (default style-projection,adain)")
    p.add_argument("--repeats", type=int, metavar="N", help="timed runs per method and size (default 7)")
    p.add_argument("--seed", type=int, metavar="N", help="input generator seed (default 0)")
    p.add_argument("--csv", action="store_const", const=True, default=None, help="emit CSV instead of a table")
    p.add_argument("--config", metavar="PATH", help="flat key=value file; command-line flags take precedence")
    _add_method_params(p)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            merged[key] = value
    return merged


def _method_from(opts: dict, name: str) -> TransformMethod:
    return TransformMethod.parse(
        name,
        patch=opts["patch"],
        stride=opts["stride"],
        seed=opts["seed"],
        shared=opts["shared_shuffle"],
        eigen_floor=opts["eigen_floor"],
    )


def config_from_options(opts: dict) -> StylizeConfig:
    return StylizeConfig(
        method=_method_from(opts, opts["method"]),
        depth=opts["depth"],
        weights=LossWeights(opts["lam"], opts["kappa"]),
        seed=opts["seed"],
        include_residual=not opts["no_residual"],
        kl_bins=opts["kl_bins"],
        kl_eps=opts["kl_eps"],
        resize=opts["resize"],
        center_crop=opts["center_crop"],
        random_crop=opts["random_crop"],
    )


def run(args: argparse.Namespace) -> None:
    opts = resolve_options(args)
    if args.command == "bench":
        sizes = [parse_size(s) for s in opts["sizes"].split(",") if s.strip()]
        methods = [_method_from(opts, m) for m in opts["methods"].split(",") if m.strip()]
        if not sizes or not methods:
            raise ValueError("bench needs at least one size and one method")
        rows = cmd_bench(sizes, methods, opts["repeats"], opts["seed"])
        sys.stdout.write(format_bench(rows, opts["csv"]))
        return
    config = config_from_options(opts)
    if args.command == "stylize":
        report = cmd_stylize(args.content, args.style, args.output, config)
        sys.stdout.write(report.to_text(config.report_header()))
    elif args.command == "shuffle-study":
        for path in cmd_shuffle_study(args.content, args.style, args.out_dir, config).values():
            print(path)
    elif args.command == "evaluate":
        report = cmd_evaluate(args.content, args.style, args.stylized, config)
        sys.stdout.write(report.to_text(config.report_header()))


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run(args)
    except (ImageError, ShapeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
