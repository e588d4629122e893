import json

import pytest
from click.testing import CliRunner

from hqrn.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


class TestConfigErrors:
    def test_missing_file_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["verify", "--config", str(tmp_path / "none.json")])
        assert result.exit_code == 2

    def test_invalid_json_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        result = runner.invoke(main, ["verify", "--config", str(path)])
        assert result.exit_code == 2

    def test_unknown_field_exits_2(self, runner, tmp_path):
        cfg = write_config(tmp_path, {"seed": 0, "bogus": 1})
        result = runner.invoke(main, ["verify", "--config", cfg])
        assert result.exit_code == 2

    def test_task_mismatch_exits_2(self, runner, tmp_path):
        cfg = write_config(tmp_path, {"task": "digits"})
        result = runner.invoke(main, ["verify", "--config", cfg])
        assert result.exit_code == 2


class TestDataErrors:
    def test_missing_idx_files_exit_3(self, runner, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "source": "idx",
                "train_count": 1,
                "test_count": 1,
                "state_dim": 8,
                "n_blocks": 1,
                "optimizer": {"epochs": 1},
                "out_dir": str(tmp_path / "out"),
            },
        )
        result = runner.invoke(main, ["digits", "--config", cfg])
        assert result.exit_code == 3


class TestVerifyCommand:
    def test_writes_outputs_and_exits_0(self, runner, tmp_path):
        cfg = write_config(tmp_path, {"seed": 0, "trials_scale": 0.02})
        out = tmp_path / "out"
        result = runner.invoke(main, ["verify", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "report.json").read_text())
        assert report["all_passed"] is True
        assert (out / "metrics.csv").exists()

    def test_seed_override(self, runner, tmp_path):
        cfg = write_config(tmp_path, {"seed": 0, "trials_scale": 0.02})
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["verify", "--config", cfg, "--out", str(out), "--seed", "9"]
        )
        assert result.exit_code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 9


class TestDigitsCommand:
    def test_synthetic_run_outputs(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            {
                "seed": 1,
                "source": "synthetic",
                "train_count": 60,
                "test_count": 30,
                "state_dim": 8,
                "n_blocks": 2,
                "optimizer": {"epochs": 2, "batch_size": 16},
                "shot_list": [None],
                "quantum_eval_every": 2,
            },
        )
        result = runner.invoke(main, ["digits", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "report.json").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "training.csv").exists()
        assert (out / "checkpoint.json").exists()
        header = (out / "metrics.csv").read_text().splitlines()
        assert header[0].startswith("# generated")
        assert header[1].split(",")[:4] == ["epoch", "n_shots", "error_rate", "disagreement"]

    def test_byte_stable_apart_from_timestamp(self, runner, tmp_path):
        cfg_obj = {
            "seed": 5,
            "source": "synthetic",
            "train_count": 40,
            "test_count": 20,
            "state_dim": 8,
            "n_blocks": 1,
            "optimizer": {"epochs": 2, "batch_size": 8},
            "shot_list": [100],
            "quantum_eval_every": 2,
        }
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            cfg = write_config(tmp_path, cfg_obj, name=f"{name}.json")
            result = runner.invoke(main, ["digits", "--config", cfg, "--out", str(out)])
            assert result.exit_code == 0, result.output
            outputs.append(
                (
                    (out / "metrics.csv").read_text().splitlines()[1:],
                    (out / "training.csv").read_text().splitlines()[1:],
                    (out / "report.json").read_text(),
                )
            )
        assert outputs[0][0] == outputs[1][0]
        assert outputs[0][1] == outputs[1][1]
        # report differs only in runtime
        ra = json.loads(outputs[0][2])
        rb = json.loads(outputs[1][2])
        ra.pop("runtime_s"), rb.pop("runtime_s")
        assert ra == rb


class TestEntangleCommand:
    def test_tiny_run(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            {
                "seed": 2,
                "train_counts": [8, 6, 8],
                "test_counts": [4, 4, 4],
                "pair_subset": 2,
                "depth_sweep": [0],
                "head_optimizer": {
                    "algorithm": "adam",
                    "learning_rate": 1e-3,
                    "weight_decay": 0.0,
                    "epochs": 5,
                    "batch_size": 4,
                },
                "trotter": None,
            },
        )
        result = runner.invoke(main, ["entangle", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "trajectories.csv").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["task"] == "entanglement"
