import hashlib
import re

import numpy as np
import pytest

from styleproj import cli
from styleproj.cli import (
    BenchRow,
    StylizeConfig,
    build_parser,
    cmd_bench,
    cmd_evaluate,
    cmd_shuffle_study,
    cmd_stylize,
    main,
    parse_size,
    read_config_file,
    scaling_slope,
)
from styleproj.imageio import center_crop, load_image, resize_bilinear, to_feature_map
from styleproj.metrics import LossReport, rank_correlation, style_loss
from styleproj.pyramid import encode
from styleproj.transforms import Method, TransformMethod

# frozen from the first verified run on the committed fixtures (seed 0, depth 3)
GOLDEN_STYLIZE_PIXELS_SHA256 = "0796a972c306ae0c2c01e8ee1bf90d1480a18977f523bf0116fe429c694b30db"
GOLDEN_STYLIZE_STYLE_LOSS = 1.23113512e-01
GOLDEN_STUDY_SP_STYLE_LOSS = 1.79189368e-01
GOLDEN_IDENTITY_STYLE_LOSS = 7.48257133e-01


@pytest.fixture
def content(fixtures_dir):
    return fixtures_dir / "content.png"


@pytest.fixture
def style(fixtures_dir):
    return fixtures_dir / "style.png"


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def pixel_sha(path):
    return hashlib.sha256(load_image(path).pixels.tobytes()).hexdigest()


class TestStylize:
    def test_identity_reproduces_content(self, tmp_path, content, style):
        out = tmp_path / "id.png"
        cmd_stylize(content, style, out, StylizeConfig(method=TransformMethod(Method.IDENTITY)))
        assert load_image(out) == load_image(content)

    def test_identity_with_preprocessing(self, tmp_path, content, style):
        out = tmp_path / "id.png"
        config = StylizeConfig(method=TransformMethod(Method.IDENTITY), resize=(40, 36), center_crop=(24, 20))
        cmd_stylize(content, style, out, config)
        expected = center_crop(resize_bilinear(load_image(content), 40, 36), 24, 20)
        assert load_image(out) == expected

    def test_no_shuffle_reproduces_style(self, tmp_path, content, style):
        out = tmp_path / "ns.png"
        report = cmd_stylize(content, style, out, StylizeConfig(method=TransformMethod(Method.NO_SHUFFLE)))
        assert load_image(out) == load_image(style)
        assert report.style == 0

    def test_golden_output(self, tmp_path, content, style, capsys):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        code, out, _ = run_cli(capsys, "stylize", content, style, a, "--seed", "0")
        assert code == 0
        run_cli(capsys, "stylize", content, style, b, "--seed", "0")
        assert a.read_bytes() == b.read_bytes()
        assert pixel_sha(a) == GOLDEN_STYLIZE_PIXELS_SHA256
        report = LossReport.from_text(out)
        assert report.style == pytest.approx(GOLDEN_STYLIZE_STYLE_LOSS, rel=1e-6)
        assert out.startswith("# encoder=laplacian-pyramid")

    def test_unequal_sizes(self, tmp_path, content, fixtures_dir):
        out = tmp_path / "w.png"
        cmd_stylize(content, fixtures_dir / "style_wide.png", out, StylizeConfig())
        assert load_image(out).pixels.shape == load_image(content).pixels.shape

    @pytest.mark.parametrize("method", [m.value for m in Method])
    def test_every_method_runs(self, tmp_path, content, style, capsys, method):
        code, out, err = run_cli(capsys, "stylize", content, style, tmp_path / "o.png", "--method", method)
        assert code == 0, err
        r = LossReport.from_text(out)
        assert r.total == pytest.approx(r.content + 10 * r.style + 2.5 * r.kl, rel=1e-8)

    def test_missing_input(self, tmp_path, style, capsys):
        code, out, err = run_cli(capsys, "stylize", tmp_path / "none.png", style, tmp_path / "o.png")
        assert code == 1
        assert "none.png" in err and out == ""
        assert not (tmp_path / "o.png").exists()

    def test_bad_method(self, tmp_path, content, style, capsys):
        code, _, err = run_cli(capsys, "stylize", content, style, tmp_path / "o.png", "--method", "dfr")
        assert code == 1 and "unknown method" in err


class TestShuffleStudy:
    def test_outputs(self, tmp_path, content, style):
        written = cmd_shuffle_study(content, style, tmp_path / "study", StylizeConfig(seed=5))
        assert sorted(written) == ["no_shuffling.png", "random_shuffling.png", "style_projection.png"]
        c_img, s_img = load_image(content), load_image(style)
        for name, path in written.items():
            img = load_image(path)
            ref = s_img if name != "style_projection.png" else c_img
            assert (img.width, img.height) == (ref.width, ref.height)

    def test_modes(self, tmp_path, content, style):
        written = cmd_shuffle_study(content, style, tmp_path, StylizeConfig(seed=5))
        s_img = load_image(style)
        assert load_image(written["no_shuffling.png"]) == s_img
        shuffled = load_image(written["random_shuffling.png"])
        assert shuffled != s_img
        for ch in range(3):
            np.testing.assert_array_equal(
                np.bincount(shuffled.pixels[..., ch].ravel(), minlength=256),
                np.bincount(s_img.pixels[..., ch].ravel(), minlength=256),
            )
        projected = to_feature_map(load_image(written["style_projection.png"]))
        np.testing.assert_array_equal(rank_correlation(to_feature_map(load_image(content)), projected), 1)

    def test_random_mode_is_seeded(self, tmp_path, content, style):
        a = cmd_shuffle_study(content, style, tmp_path / "a", StylizeConfig(seed=9))
        b = cmd_shuffle_study(content, style, tmp_path / "b", StylizeConfig(seed=9))
        assert a["random_shuffling.png"].read_bytes() == b["random_shuffling.png"].read_bytes()

    def test_cli_prints_paths(self, tmp_path, content, style, capsys):
        code, out, _ = run_cli(capsys, "shuffle-study", content, style, tmp_path / "d")
        assert code == 0
        assert [line.rsplit("/", 1)[-1] for line in out.split()] == [
            "no_shuffling.png", "random_shuffling.png", "style_projection.png"
        ]


class TestEvaluate:
    def test_stylized_equals_content(self, content, style):
        r = cmd_evaluate(content, style, content, StylizeConfig())
        assert r.content == 0 and r.kl == 0
        assert r.style == pytest.approx(GOLDEN_IDENTITY_STYLE_LOSS, rel=1e-6)

    def test_stylized_equals_style(self, content, style):
        r = cmd_evaluate(content, style, style, StylizeConfig())
        assert r.style == 0 and r.gram_distance == 0

    def test_projection_beats_identity(self, tmp_path, content, style):
        study = cmd_shuffle_study(content, style, tmp_path, StylizeConfig())
        sp = cmd_evaluate(content, style, study["style_projection.png"], StylizeConfig())
        ident = cmd_evaluate(content, style, content, StylizeConfig())
        assert sp.style == pytest.approx(GOLDEN_STUDY_SP_STYLE_LOSS, rel=1e-6)
        assert sp.style < ident.style

    def test_weights_flags(self, content, style, capsys):
        code, out, _ = run_cli(capsys, "evaluate", content, style, content, "--lambda", "1", "--kappa", "0")
        r = LossReport.from_text(out)
        assert code == 0 and r.total == r.content + r.style

    def test_size_mismatch(self, content, style, fixtures_dir, capsys):
        code, _, err = run_cli(capsys, "evaluate", content, style, fixtures_dir / "style_wide.png")
        assert code == 1 and "must match" in err

    def test_output_format(self, content, style, capsys):
        _, out, _ = run_cli(capsys, "evaluate", content, style, style)
        lines = out.strip().splitlines()
        assert lines[0].startswith("# ")
        assert [line.split("=")[0] for line in lines[1:]] == ["style", "content", "kl", "gram_distance", "total"]
        for line in lines[1:]:
            assert re.fullmatch(r"[a-z_]+=-?\d\.\d{8}e[+-]\d{2}", line)


class TestBench:
    def test_rows_and_determinism(self):
        methods = [TransformMethod(), TransformMethod(Method.ADAIN)]
        sizes = [(2, 8, 8), (2, 16, 16), (3, 4, 4)]
        rows = cmd_bench(sizes, methods, repeats=2, seed=1)
        assert [(r.method, (r.channels, r.height, r.width)) for r in rows] == [
            (m.tag.value, s) for m in methods for s in sizes
        ]
        again = cmd_bench(sizes, methods, repeats=1, seed=1)
        assert [r.checksum for r in rows] == [r.checksum for r in again]
        assert all(r.min_s <= r.median_s for r in rows)

    def test_csv(self, capsys):
        code, out, _ = run_cli(capsys, "bench", "--sizes", "2x8x8,2x16x16", "--methods", "identity",
                               "--repeats", "1", "--csv")
        lines = out.strip().splitlines()
        assert code == 0
        assert lines[0] == "method,C,H,W,V,median_s,min_s,checksum"
        assert len([ln for ln in lines if ln.startswith("identity,")]) == 2
        assert lines[-1].startswith("# scaling_slope[identity]=")

    def test_slope_fit(self):
        rows = [BenchRow("m", 1, 1, v, 1e-6 * v, 1e-6 * v, "") for v in (100, 400, 1600)]
        assert scaling_slope(rows, "m") == pytest.approx(1.0)
        assert scaling_slope(rows[:1], "m") is None

    @pytest.mark.parametrize("text", ["3x4", "0x2x2", "axbxc", "1x2x3x4"])
    def test_invalid_size(self, text, capsys):
        with pytest.raises(ValueError):
            parse_size(text)
        code, _, err = run_cli(capsys, "bench", "--sizes", text)
        assert code == 1 and "invalid size" in err


class TestArguments:
    FLAGS = {
        "stylize": ["--method", "--depth", "--lambda", "--kappa", "--seed", "--resize", "--center-crop",
                    "--random-crop", "--no-residual", "--kl-bins", "--kl-eps", "--config", "--patch",
                    "--stride", "--eigen-floor", "--shared-shuffle"],
        "bench": ["--sizes", "--methods", "--repeats", "--seed", "--csv", "--config"],
    }
    FLAGS["shuffle-study"] = FLAGS["stylize"]
    FLAGS["evaluate"] = FLAGS["stylize"]

    @pytest.mark.parametrize("command", ["stylize", "shuffle-study", "evaluate", "bench"])
    def test_help_documents_every_flag(self, command):
        parser = build_parser()
        sub = parser._subparsers._group_actions[0].choices[command]
        text = sub.format_help()
        for flag in self.FLAGS[command]:
            assert flag in text
        for action in sub._actions:
            assert action.help, f"{command}: {action.option_strings or action.dest} lacks help"

    def test_top_level_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        out = capsys.readouterr().out
        assert exc.value.code == 0
        for command in ("stylize", "shuffle-study", "evaluate", "bench", "STYLEPROJ_THREADS"):
            assert command in out

    def test_config_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nmethod = adain\ndepth=2\nlambda=4\nno-residual=true\n")
        args = build_parser().parse_args(["stylize", "c", "s", "o", "--config", str(cfg), "--depth", "1"])
        config = cli.config_from_options(cli.resolve_options(args))
        assert config.method.tag is Method.ADAIN
        assert config.depth == 1
        assert config.weights.lambda_style == 4 and config.weights.kappa_kl == 2.5
        assert config.include_residual is False

    def test_defaults(self):
        args = build_parser().parse_args(["stylize", "c", "s", "o"])
        config = cli.config_from_options(cli.resolve_options(args))
        assert config == StylizeConfig()
        assert (config.kl_bins, config.kl_eps, config.depth, config.seed) == (256, 1e-8, 3, 0)

    def test_bad_config_entry(self, tmp_path, content, style, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour=red\n")
        code, _, err = run_cli(capsys, "evaluate", content, style, content, "--config", cfg)
        assert code == 1 and "unrecognized" in err

    def test_read_config_types(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("resize=64x48\nkl_eps=1e-6\ncsv=yes\n")
        assert read_config_file(cfg) == {"resize": (64, 48), "kl_eps": 1e-6, "csv": True}

    def test_crop_flags_exclusive(self):
        with pytest.raises(ValueError):
            StylizeConfig(center_crop=(2, 2), random_crop=(2, 2))

    def test_random_crop_flag(self, tmp_path, content, style):
        out = tmp_path / "o.png"
        config = StylizeConfig(method=TransformMethod(Method.IDENTITY), random_crop=(16, 16), seed=4)
        cmd_stylize(content, style, out, config)
        assert load_image(out).pixels.shape == (16, 16, 3)

    def test_threads_env_var(self, monkeypatch):
        from styleproj.tensor import worker_count
        monkeypatch.setenv("STYLEPROJ_THREADS", "1")
        assert worker_count(64) == 1
        monkeypatch.setenv("STYLEPROJ_THREADS", "zero")
        with pytest.raises(ValueError):
            worker_count(4)
