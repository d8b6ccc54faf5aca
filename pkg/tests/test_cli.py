import json

import numpy as np
import pytest

from gazekit import simulator as S
from gazekit.checkpoint import load_checkpoint, save_checkpoint
from gazekit.cli import main
from gazekit.models import ModelConfig, init_params, predict_batch
from gazekit.training import TrainConfig


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    noise = {
        "marker_rot_deg": 2.0,
        "marker_trans_m": 0.03,
        "keypoint_deg": 1.0,
        "obs_base_deg": 3.0,
        "obs_yaw_gain": 6.0,
        "occlusion_yaw_deg": 140.0,
    }
    cfg = tmp_path_factory.mktemp("cfg") / "session.json"
    cfg.write_text(
        json.dumps(
            {
                "n_subjects": 4,
                "loop_radius_range": [2.0, 2.0],
                "noise": noise,
                "seed": 3,
            }
        )
    )
    rc = main(
        ["simulate", "--config", str(cfg), "--out", str(out),
         "--ratios", "0.5", "0.25", "0.25"]
    )
    assert rc == 0
    return out


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = init_params(ModelConfig(kind="lstm", feature_dim=8), seed=1)
        tc = TrainConfig(lr=2e-3, epochs=3)
        path = tmp_path / "m.json"
        save_checkpoint(path, p, tc)
        q, tc2 = load_checkpoint(path)
        assert tc2 == tc
        assert q.config == p.config
        for k in p.arrays:
            np.testing.assert_array_equal(p.arrays[k], q.arrays[k])
        X = np.random.default_rng(0).normal(size=(3, 7, 8))
        np.testing.assert_array_equal(
            predict_batch(p, X)[0], predict_batch(q, X)[0]
        )


class TestCli:
    def test_simulate_writes_splits(self, dataset_dir):
        for name in ("train", "val", "test"):
            assert (dataset_dir / f"{name}.jsonl").stat().st_size > 0

    def test_label(self, dataset_dir, tmp_path):
        out = tmp_path / "labels.csv"
        rc = main(
            ["label", "--data", str(dataset_dir / "test.jsonl"), "--out", str(out)]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("subject_id,")
        assert len(lines) > 1

    def test_train_eval_report(self, dataset_dir, tmp_path):
        ckpt = tmp_path / "m.json"
        rc = main(
            ["train", "--data", str(dataset_dir), "--out", str(ckpt),
             "--epochs", "3", "--lr", "0.003", "--seed", "1"]
        )
        assert rc == 0
        report = tmp_path / "r.json"
        plots = tmp_path / "plots"
        rc = main(
            ["eval", "--checkpoint", str(ckpt), "--data", str(dataset_dir),
             "--report", str(report), "--plots", str(plots)]
        )
        assert rc == 0
        doc = json.loads(report.read_text())
        assert doc["mean_err_all"] >= 0
        assert (plots / "yaw_curve.csv").exists()
        assert (plots / "gaze_distribution.svg").exists()
        combined = tmp_path / "summary.csv"
        rc = main(["report", str(report), "--out", str(combined)])
        assert rc == 0
        assert combined.read_text().startswith("source,")

    def test_adapt(self, dataset_dir, tmp_path):
        ckpt = tmp_path / "m.json"
        assert main(
            ["train", "--data", str(dataset_dir), "--out", str(ckpt),
             "--epochs", "2", "--lr", "0.003"]
        ) == 0
        out = tmp_path / "adapted.json"
        rc = main(
            ["adapt", "--checkpoint", str(ckpt), "--src", str(dataset_dir),
             "--tgt", str(dataset_dir / "test.jsonl"), "--out", str(out),
             "--epochs", "1"]
        )
        assert rc == 0
        assert out.exists()

    def test_attention(self, tmp_path):
        grid = tmp_path / "grid.json"
        grid.write_text(
            json.dumps({"point": [0, 2, 0], "normal": [0, -1, 0]})
        )
        rays = tmp_path / "rays.jsonl"
        with open(rays, "w") as f:
            f.write(json.dumps({"origin": [0, 0, 0], "direction": [0, 1, 0],
                                "label": [2, 3]}) + "\n")
            f.write(json.dumps({"origin": [0, 0, 0], "direction": [1, 0, 0],
                                "label": [0, 0]}) + "\n")
        out = tmp_path / "attention.json"
        rc = main(["attention", "--grid", str(grid), "--data", str(rays),
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert np.sum(doc["counts"]) == 1
        assert doc["hits"][1] is None

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"n_subjects": 0}))
        rc = main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_runtime_error_exit_code(self, tmp_path):
        rc = main(
            ["label", "--data", str(tmp_path / "missing.jsonl"),
             "--out", str(tmp_path / "x.csv")]
        )
        assert rc == 1
