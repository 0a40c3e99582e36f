"""CLI behavior and the stable exit-code contract."""

import json
import os

import numpy as np
import pytest

from styleshift.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from styleshift.codebook import StyleCodebook, StyleRepresentation
from styleshift.network import NetworkConfig, Stylizer
from styleshift.storage import (encode_image, load_codebook, load_image,
                                save_codebook, save_image)
from styleshift.synthetic import content_image, content_pool, style_pool

TINY = dict(encoder_channels=[4, 6, 8], sab_count=2, mlp_hidden=6, style_dim=8)


@pytest.fixture
def world(tmp_path):
    """A small trained-ish model + codebook + images on disk."""
    model = Stylizer.initialize(NetworkConfig.from_dict(TINY), seed=3)
    model_path = tmp_path / "model.sta"
    digest = model.save(model_path)
    cb = StyleCodebook(style_dim=8, network_fingerprint=digest)
    rng = np.random.default_rng(0)
    for i in range(2):
        cb.add(StyleRepresentation(f"s{i}", f"style {i}",
                                   rng.uniform(-1, 1, 8).astype(np.float32)))
    cb_path = tmp_path / "codebook.json"
    save_codebook(cb, cb_path)
    content_path = tmp_path / "content.png"
    save_image(content_path, content_image(5, 0, 32))
    return {"dir": tmp_path, "model": str(model_path), "codebook": str(cb_path),
            "content": str(content_path), "cb": cb}


def test_usage_errors_exit_1(capsys):
    assert main(["stylize"]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_help_exits_0():
    assert main(["--help"]) == 0


def test_missing_file_exits_2(world, capsys):
    code = main(["stylize", "--model", "/nope/model.sta", "--codebook", world["codebook"],
                 "--content", world["content"], "--style", "s0", "--out", "/tmp/x.png"])
    assert code == EXIT_DATA


def test_bad_alpha_exits_1(world):
    code = main(["stylize", "--model", world["model"], "--codebook", world["codebook"],
                 "--content", world["content"], "--style", "s0", "--alpha", "1.5",
                 "--out", str(world["dir"] / "out.png")])
    assert code == EXIT_USAGE


def test_stylize_writes_png(world):
    out = world["dir"] / "out.png"
    code = main(["stylize", "--model", world["model"], "--codebook", world["codebook"],
                 "--content", world["content"], "--style", "s0", "--out", str(out)])
    assert code == EXIT_OK
    img = load_image(out)
    assert img.shape == (3, 32, 32)


def test_stylize_alpha_zero_matches_identity_entry(world):
    out_a = world["dir"] / "a.png"
    out_b = world["dir"] / "b.png"
    assert main(["stylize", "--model", world["model"], "--codebook", world["codebook"],
                 "--content", world["content"], "--style", "s0", "--alpha", "0",
                 "--out", str(out_a)]) == EXIT_OK
    assert main(["stylize", "--model", world["model"], "--codebook", world["codebook"],
                 "--content", world["content"], "--style", "identity",
                 "--out", str(out_b)]) == EXIT_OK
    assert out_a.read_bytes() == out_b.read_bytes()


def test_fingerprint_mismatch_exits_2_and_override_works(world, tmp_path):
    other = Stylizer.initialize(NetworkConfig.from_dict(TINY), seed=99)
    other_path = tmp_path / "other.sta"
    other.save(other_path)
    args = ["stylize", "--model", str(other_path), "--codebook", world["codebook"],
            "--content", world["content"], "--style", "s0",
            "--out", str(tmp_path / "o.png")]
    assert main(args) == EXIT_DATA
    assert main(args + ["--allow-fingerprint-mismatch"]) == EXIT_OK


def test_interpolate_prints_mixture(world, capsys):
    code = main(["interpolate", "--codebook", world["codebook"],
                 "--weights", "s0=0.25,s1=0.75"])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    want = 0.25 * world["cb"].get("s0").values + 0.75 * world["cb"].get("s1").values
    np.testing.assert_allclose(doc["values"], want, atol=1e-6)
    assert doc["weights_normalized"] is False


def test_interpolate_normalization_flag(world, capsys):
    assert main(["interpolate", "--codebook", world["codebook"],
                 "--weights", "s0=0.2,s1=0.2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["weights_normalized"] is True


def test_info_paper_scale_prints_budget(capsys):
    assert main(["info", "--config", "paper-scale", "--input", "512x512"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "budget 0.91" in out and "budget 0.11" in out and "budget 5.31" in out
    assert "16 floats" in out


def test_info_rejects_bad_size():
    assert main(["info", "--config", "paper-scale", "--input", "512by512"]) == EXIT_USAGE


def test_gradcheck_strided_passes(capsys):
    assert main(["gradcheck", "--seed", "7", "--stride", "97"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_gradcheck_impossible_tolerance_exits_3(capsys):
    assert main(["gradcheck", "--seed", "7", "--stride", "97",
                 "--tolerance", "1e-18"]) == EXIT_NUMERIC


def test_train_and_add_style_flow(tmp_path, capsys):
    contents_dir = tmp_path / "contents"
    styles_dir = tmp_path / "styles"
    contents_dir.mkdir()
    styles_dir.mkdir()
    for i, img in enumerate(content_pool(11, 3, size=24)):
        save_image(contents_dir / f"c{i}.png", img)
    for sid, img in style_pool(11, 2, size=32).items():
        save_image(styles_dir / f"{sid}.png", img)
    config = {
        "network": TINY,
        "train": {"iterations": 4, "batch_size": 2, "content_crop": 16,
                  "lr_halve_every": 2, "checkpoint_every": 4, "seed": 1},
    }
    config_path = tmp_path / "train.json"
    config_path.write_text(json.dumps(config))
    out_dir = tmp_path / "run"
    assert main(["train", "--contents", str(contents_dir), "--styles", str(styles_dir),
                 "--config", str(config_path), "--out", str(out_dir)]) == EXIT_OK
    assert (out_dir / "model.sta").exists()
    assert (out_dir / "train_log.jsonl").exists()
    lines = (out_dir / "train_log.jsonl").read_text().strip().splitlines()
    assert len(lines) == 4
    record = json.loads(lines[0])
    assert {"iteration", "lr", "total", "content", "style"} <= set(record)

    new_style = tmp_path / "new.png"
    save_image(new_style, style_pool(77, 1, size=32)["style00"])
    out_cb = tmp_path / "extended.json"
    assert main(["add-style", "--model", str(out_dir / "model.sta"),
                 "--codebook", str(out_dir / "codebook.json"),
                 "--style", str(new_style), "--name", "My New Style",
                 "--iterations", "3", "--out", str(out_cb)]) == EXIT_OK
    extended = load_codebook(out_cb)
    assert "my-new-style" in extended
    original = load_codebook(out_dir / "codebook.json")
    for sid in original.ids():
        assert extended.get(sid).values.tobytes() == original.get(sid).values.tobytes()


def test_train_rejects_empty_dirs(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    config_path = tmp_path / "c.json"
    config_path.write_text(json.dumps({"network": TINY, "train": {"iterations": 1}}))
    assert main(["train", "--contents", str(empty), "--styles", str(empty),
                 "--config", str(config_path), "--out", str(tmp_path / "o")]) == EXIT_DATA
