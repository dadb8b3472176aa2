import json

import numpy as np
import pytest

from shotvae.cli import main
from shotvae.config import TrainConfig
from shotvae.data import Dataset, write_idx
from shotvae.train import read_pgm, write_pgm


@pytest.fixture
def toy_config_file(tmp_path):
    config = TrainConfig(epochs=1, z_dim=3, hidden=8, labeled_batch=4, unlabeled_batch=8,
                         synth_num_classes=3, synth_input_dim=12, synth_per_class=12,
                         synth_test_per_class=4, synth_style_dim=2, synth_noise_sigma=0.02,
                         labeled_count=6)
    path = tmp_path / "config.txt"
    config.to_file(path)
    return path


class TestTrainEvalFlow:
    def test_train_then_eval_and_generate(self, tmp_path, toy_config_file, capsys):
        run_dir = tmp_path / "run"
        assert main(["train", "--config", str(toy_config_file), "--out", str(run_dir)]) == 0
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["epochs"] == 1
        assert (run_dir / "metrics.jsonl").exists()

        assert main(["eval", "--ckpt", str(run_dir / "ckpt.bin"),
                     "--config", str(toy_config_file)]) == 0
        ev = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert 0.0 <= ev["error_rate"] <= 1.0 and ev["n"] == 12

        src = tmp_path / "src.npy"
        np.save(src, np.random.default_rng(0).uniform(size=12))
        gen_dir = tmp_path / "gen"
        assert main(["generate", "--ckpt", str(run_dir / "ckpt.bin"), "--input", str(src),
                     "--out", str(gen_dir), "--seed", "3"]) == 0
        assert (gen_dir / "montage.pgm").exists()
        assert len(list(gen_dir.glob("class_*.pgm"))) == 3

    def test_generate_from_pgm_source(self, tmp_path, toy_config_file):
        run_dir = tmp_path / "run"
        main(["train", "--config", str(toy_config_file), "--out", str(run_dir)])
        img = np.random.default_rng(1).integers(0, 256, size=(3, 4), dtype=np.uint8)
        write_pgm(tmp_path / "s.pgm", img)
        assert main(["generate", "--ckpt", str(run_dir / "ckpt.bin"),
                     "--input", str(tmp_path / "s.pgm"), "--out", str(tmp_path / "g")]) == 0

    def test_eval_with_idx_pair(self, tmp_path, toy_config_file):
        run_dir = tmp_path / "run"
        main(["train", "--config", str(toy_config_file), "--out", str(run_dir)])
        rng = np.random.default_rng(2)
        ds = Dataset(rng.uniform(size=(6, 12)), rng.integers(0, 3, size=6), 3)
        write_idx(ds, tmp_path / "im.idx", tmp_path / "lb.idx", rows=3, cols=4)
        assert main(["eval", "--ckpt", str(run_dir / "ckpt.bin"),
                     "--images", str(tmp_path / "im.idx"),
                     "--labels", str(tmp_path / "lb.idx")]) == 0


class TestVerifyCommand:
    def test_pass_exit_zero_and_reports(self, tmp_path, capsys):
        code = main(["verify", "--props", "b2,e5", "--seed", "1", "--out", str(tmp_path / "r")])
        assert code == 0
        output = capsys.readouterr().out
        assert "B2: PASS" in output and "E5: PASS" in output
        assert json.loads((tmp_path / "r" / "prop_b2.json").read_text())["passed"]

    def test_unknown_prop_usage_error(self, capsys):
        assert main(["verify", "--props", "q9"]) == 2

    def test_check_failure_exit_one(self, monkeypatch, capsys):
        import shotvae.verification.propositions as props
        from shotvae.verification import PropositionReport

        def fake(seed=0):
            return PropositionReport("B2", False, 1.0, 1, 0.0)

        monkeypatch.setitem(props._VERIFIERS, "B2", fake)
        assert main(["verify", "--props", "b2"]) == 1


class TestSplitCommand:
    def test_split_writes_idx_and_manifest(self, tmp_path, toy_config_file, capsys):
        out = tmp_path / "sp"
        code = main(["split", "--config", str(toy_config_file), "--labeled", "6",
                     "--seed", "3", "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "split_manifest.json").read_text())
        assert manifest["labeled_count"] == 6 and manifest["unlabeled_count"] == 30
        from shotvae.data import load_idx
        labeled = load_idx(out / "labeled_images.idx", out / "labeled_labels.idx")
        assert len(labeled) == 6

    def test_split_from_idx_pair(self, tmp_path):
        rng = np.random.default_rng(5)
        ds = Dataset(rng.uniform(size=(12, 16)), np.arange(12) % 3, 3)
        write_idx(ds, tmp_path / "im.idx", tmp_path / "lb.idx")
        assert main(["split", "--images", str(tmp_path / "im.idx"),
                     "--labels", str(tmp_path / "lb.idx"), "--labeled", "6",
                     "--seed", "0", "--out", str(tmp_path / "out")]) == 0

    def test_missing_inputs_usage_error(self, tmp_path, capsys):
        assert main(["split", "--labeled", "5", "--seed", "0",
                     "--out", str(tmp_path / "x")]) == 2


class TestErrorPaths:
    def test_missing_config_io_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_bad_checkpoint_io_error(self, tmp_path, toy_config_file):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"XXXX")
        assert main(["eval", "--ckpt", str(bad), "--config", str(toy_config_file)]) == 2

    def test_generate_dimension_mismatch(self, tmp_path, toy_config_file):
        run_dir = tmp_path / "run"
        main(["train", "--config", str(toy_config_file), "--out", str(run_dir)])
        np.save(tmp_path / "wrong.npy", np.zeros(5))
        assert main(["generate", "--ckpt", str(run_dir / "ckpt.bin"),
                     "--input", str(tmp_path / "wrong.npy"),
                     "--out", str(tmp_path / "g2")]) == 2
