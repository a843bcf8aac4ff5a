"""CLI behaviour: commands, determinism, exit codes."""

import numpy as np
import pytest

from han_sr.checkpoint import load_checkpoint
from han_sr.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from han_sr.data import Image, decode_png, encode_png
from han_sr.model import ModelConfig, init_params


def write_dataset(root, rng, count=2, size=48):
    hr = root / "HR"
    hr.mkdir(parents=True)
    for i in range(count):
        yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                             indexing="ij")
        base = 0.5 + 0.25 * np.sin(5 * xx + i) * np.cos(4 * yy)
        tex = rng.random((size, size)) * 0.2
        planes = np.stack([np.clip(base + tex, 0, 1),
                           np.clip(0.8 * base + tex, 0, 1),
                           np.clip(0.9 - 0.5 * base + tex, 0, 1)])
        (hr / f"img{i}.png").write_bytes(
            encode_png(Image(planes.astype(np.float32))))
    return hr


def write_config(path, dataset, ckpt, **overrides):
    values = {
        "n_groups": 1, "n_blocks": 1, "channels": 8, "reduction": 4,
        "scale": 2, "steps": 2, "batch_size": 2, "num_patches": 2,
        "patch_size": 12, "lr": 1e-3, "augment": "false", "seed": 3,
        "dataset_dir": str(dataset), "checkpoint": str(ckpt),
    }
    values.update(overrides)
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()),
                    encoding="utf-8")
    return path


@pytest.fixture
def workspace(tmp_path, rng):
    write_dataset(tmp_path / "data", rng)
    return tmp_path


def train_once(workspace, name="run", **overrides):
    ckpt = workspace / f"{name}.ckpt"
    cfg = write_config(workspace / f"{name}.cfg", workspace / "data", ckpt,
                       **overrides)
    assert main(["train", str(cfg)]) == EXIT_OK
    return ckpt


class TestDegrade:
    def test_constant_hr_gives_constant_lr(self, tmp_path):
        hr = tmp_path / "flat"
        hr.mkdir()
        (hr / "c.png").write_bytes(
            encode_png(Image(np.full((3, 16, 16), 0.5, np.float32))))
        out = tmp_path / "lr"
        assert main(["degrade", str(hr), str(out), "--scale", "2"]) == EXIT_OK
        lr = decode_png((out / "c.png").read_bytes())
        assert (lr.height, lr.width) == (8, 8)
        np.testing.assert_allclose(lr.planes, 0.5, atol=1 / 255)

    def test_output_count_and_reruns_are_identical(self, workspace):
        out = workspace / "lr"
        argv = ["degrade", str(workspace / "data" / "HR"), str(out),
                "--scale", "2", "--degradation", "bd"]
        assert main(argv) == EXIT_OK
        files = sorted(out.glob("*.png"))
        assert len(files) == 2
        first = [f.read_bytes() for f in files]
        assert main(argv) == EXIT_OK
        assert [f.read_bytes() for f in sorted(out.glob("*.png"))] == first

    def test_missing_dir_is_io_error(self, tmp_path):
        assert main(["degrade", str(tmp_path / "nope"), str(tmp_path / "o"),
                     "--scale", "2"]) == EXIT_IO


class TestTrain:
    def test_zero_steps_checkpoint_equals_init(self, workspace):
        ckpt = train_once(workspace, steps=0)
        config_str, arrays = load_checkpoint(ckpt)
        assert "steps = 0" in config_str
        reference = init_params(ModelConfig(n_groups=1, n_blocks=1, channels=8,
                                            reduction=4, scale=2), 3)
        for name, tensor in reference.named():
            assert arrays[name].tobytes() == tensor.data.tobytes(), name

    def test_same_seed_runs_are_identical(self, workspace):
        a = train_once(workspace, name="a", steps=3)
        b = train_once(workspace, name="b", steps=3)
        log_a = (workspace / "a.ckpt.loss.csv").read_bytes()
        log_b = (workspace / "b.ckpt.loss.csv").read_bytes()
        assert log_a == log_b
        _, arrays_a = load_checkpoint(a)
        _, arrays_b = load_checkpoint(b)
        for name in arrays_a:
            assert arrays_a[name].tobytes() == arrays_b[name].tobytes()

    def test_env_seed_overrides_config(self, workspace, monkeypatch):
        monkeypatch.setenv("HAN_SEED", "99")
        ckpt = train_once(workspace, name="env", steps=0)
        _, arrays = load_checkpoint(ckpt)
        reference = init_params(ModelConfig(n_groups=1, n_blocks=1, channels=8,
                                            reduction=4, scale=2), 99)
        assert arrays["head.w"].tobytes() == reference["head.w"].data.tobytes()

    def test_bad_env_seed_is_config_error(self, workspace, monkeypatch):
        monkeypatch.setenv("HAN_SEED", "pi")
        cfg = write_config(workspace / "c.cfg", workspace / "data",
                           workspace / "c.ckpt")
        assert main(["train", str(cfg)]) == EXIT_CONFIG

    def test_unreadable_config_is_io_error(self, tmp_path):
        assert main(["train", str(tmp_path / "none.cfg")]) == EXIT_IO

    def test_bad_config_is_config_error(self, workspace):
        cfg = workspace / "bad.cfg"
        cfg.write_text("scale = 7\n", encoding="utf-8")
        assert main(["train", str(cfg)]) == EXIT_CONFIG

    def test_missing_dataset_is_io_error(self, workspace):
        cfg = write_config(workspace / "m.cfg", workspace / "absent",
                           workspace / "m.ckpt")
        assert main(["train", str(cfg)]) == EXIT_IO

    def test_exploding_run_aborts_with_numeric_exit(self, workspace):
        cfg = write_config(workspace / "x.cfg", workspace / "data",
                           workspace / "x.ckpt", lr=1e18, steps=12)
        with np.errstate(over="ignore", invalid="ignore"):
            assert main(["train", str(cfg)]) == EXIT_NUMERIC

    def test_periodic_checkpointing(self, workspace):
        ckpt = train_once(workspace, name="p", steps=4, checkpoint_every=2)
        assert ckpt.exists()


class TestInferEval:
    def test_infer_shape_and_determinism(self, workspace):
        ckpt = train_once(workspace)
        lr_dir = workspace / "lr"
        assert main(["degrade", str(workspace / "data" / "HR"), str(lr_dir),
                     "--scale", "2"]) == EXIT_OK
        out = workspace / "sr.png"
        argv = ["infer", str(ckpt), str(lr_dir / "img0.png"), str(out)]
        assert main(argv) == EXIT_OK
        sr = decode_png(out.read_bytes())
        assert (sr.height, sr.width) == (48, 48)
        first = out.read_bytes()
        assert main(argv) == EXIT_OK
        assert out.read_bytes() == first

    def test_eval_reports_every_image(self, workspace, capsys):
        ckpt = train_once(workspace)
        csv = workspace / "scores.csv"
        assert main(["eval", str(ckpt), str(workspace / "data"),
                     "--degradation", "bi", "--csv", str(csv)]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert stdout.count("img") == 2
        assert "mean" in stdout
        assert len(csv.read_text().strip().splitlines()) == 3

    def test_eval_self_ensemble_runs(self, workspace, capsys):
        ckpt = train_once(workspace)
        assert main(["eval", str(ckpt), str(workspace / "data"),
                     "--self-ensemble"]) == EXIT_OK
        assert "mean" in capsys.readouterr().out

    def test_eval_scale_mismatch_is_config_error(self, workspace):
        ckpt = train_once(workspace)
        assert main(["eval", str(ckpt), str(workspace / "data"),
                     "--scale", "4"]) == EXIT_CONFIG

    def test_missing_checkpoint_is_io_error(self, workspace):
        assert main(["eval", str(workspace / "no.ckpt"),
                     str(workspace / "data")]) == EXIT_IO
        assert main(["infer", str(workspace / "no.ckpt"), "a.png",
                     "b.png"]) == EXIT_IO

    def test_corrupt_checkpoint_is_io_error(self, workspace):
        ckpt = train_once(workspace)
        blob = bytearray(ckpt.read_bytes())
        blob[40] ^= 0xFF
        ckpt.write_bytes(bytes(blob))
        assert main(["eval", str(ckpt), str(workspace / "data")]) == EXIT_IO
