"""End-to-end command-line surface: train, sample, verify, bench, reward."""

import numpy as np
import pytest

from pixelmot.cli import main
from pixelmot.config import TrainConfig, format_config
from pixelmot.data import render_sample
from pixelmot.ppm import read_ppm, write_ppm

TINY_CFG = TrainConfig(
    vocab=32, width=16, layers=1, q_heads=2, kv_heads=1,
    rope_dims=(4, 2, 2), cond_freq_dim=8, ffn_mult=2,
    steps=3, batch=2, seed=1, image_size=32, data_count=4,
    noise_base_hw=32, noise_max_hw=32,
)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg_path = out / "config.txt"
    cfg_path.write_text(format_config(TINY_CFG), encoding="utf-8")
    code = main(["train", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    return out


class TestTrainCommand:
    def test_writes_checkpoint_and_metrics(self, trained_dir):
        assert (trained_dir / "checkpoint.bin").exists()
        metrics = (trained_dir / "metrics.log").read_text(encoding="utf-8")
        lines = [l for l in metrics.splitlines() if not l.startswith("#")]
        assert len(lines) == TINY_CFG.steps
        assert metrics.splitlines()[0] == "# step ce mse total grad_norm"

    def test_missing_config_is_usage_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path)]) == 2


class TestSampleCommand:
    def test_generates_ppm(self, trained_dir, tmp_path):
        prompt = tmp_path / "prompt.txt"
        prompt.write_text("<bos> red square center <eos>", encoding="utf-8")
        out_path = tmp_path / "out.ppm"
        code = main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                     "--prompt-file", str(prompt), "--height", "32", "--width", "32",
                     "--steps", "2", "--seed", "3", "--out", str(out_path)])
        assert code == 0
        img = read_ppm(out_path)
        assert img.shape == (3, 32, 32)

    def test_same_seed_same_bytes(self, trained_dir, tmp_path):
        prompt = tmp_path / "prompt.txt"
        prompt.write_text("<bos> blue circle top <eos>", encoding="utf-8")
        args = ["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                "--prompt-file", str(prompt), "--height", "32", "--width", "32",
                "--steps", "2", "--seed", "9"]
        a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_word_is_usage_error(self, trained_dir, tmp_path, capsys):
        prompt = tmp_path / "prompt.txt"
        prompt.write_text("definitely-not-a-word", encoding="utf-8")
        code = main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                     "--prompt-file", str(prompt), "--out", str(tmp_path / "x.ppm")])
        assert code == 2
        assert "vocabulary" in capsys.readouterr().err


class TestVerifyCommand:
    def test_filtered_run_exits_zero(self, capsys):
        assert main(["verify", "--filter", "rewards."]) == 0
        out = capsys.readouterr().out
        assert "rewards.gate_sum pass" in out
        assert "invariants passed" in out


class TestBenchCommand:
    def test_reports_plan_and_counters(self, capsys):
        assert main(["bench", "--layout", "t6,i1x2", "--bm", "4"]) == 0
        out = capsys.readouterr().out
        assert "block 0 rows [0,4) causal-fast-path key_end=4" in out
        assert "block 1 rows [4,8) image-extended key_end=8" in out
        assert "skipped_key_blocks=" in out
        assert "max_abs_diff" in out

    def test_noise_layout_is_usage_error(self, capsys):
        assert main(["bench", "--layout", "t2,n1x1"]) == 2

    def test_bad_layout_string(self, capsys):
        assert main(["bench", "--layout", "q5"]) == 2


class TestRewardCommand:
    def test_line_per_triple(self, tmp_path, capsys):
        for stem, image_seed in (("a", 0), ("b", 1)):
            write_ppm(tmp_path / f"{stem}.ppm",
                      render_sample("red", "square", "center", 32))
            (tmp_path / f"{stem}.prompt.txt").write_text("a red square", encoding="utf-8")
            (tmp_path / f"{stem}.ref.txt").write_text("red square", encoding="utf-8")
        (tmp_path / "a.ocr.txt").write_text("red square", encoding="utf-8")
        assert main(["reward", "--dir", str(tmp_path)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("a r_ocr=1.0000")
        assert lines[1].startswith("b r_ocr=0.0000")  # no extracted text file
        for line in lines:
            assert "r_sty=" in line and " r=" in line and "valid=1" in line

    def test_empty_dir_is_usage_error(self, tmp_path, capsys):
        assert main(["reward", "--dir", str(tmp_path)]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["not-a-command"])
    assert exc.value.code == 2


def test_thread_env_var_propagates(monkeypatch):
    monkeypatch.setenv("PIXELMOT_THREADS", "1")
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    assert main(["verify", "--filter", "rewards.gate_sum"]) == 0
    import os

    assert os.environ.get("OMP_NUM_THREADS") == "1"
