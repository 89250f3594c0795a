"""Config layering/validation and the command-line surface."""

import os
import subprocess
import sys

import pytest

from fogrelaysim.cli import main
from fogrelaysim.config import SimConfig, load_config, write_example_config
from fogrelaysim.errors import ConfigurationError
from fogrelaysim.metrics import read_episodes_csv, read_summary_csv


def test_defaults_match_parameter_table():
    cfg = SimConfig()
    assert cfg.alpha == 0.1
    assert cfg.gamma == 0.9
    assert cfg.delta == 0.25
    assert cfg.space_size == 80.0
    assert cfg.noise_power == 2e-7
    assert cfg.snr_threshold == 1.0
    assert cfg.path_loss_exponent == 3.0
    assert cfg.p_i_min == 0.001 and cfg.p_i_max == 0.3
    assert cfg.p_r == 0.3
    assert cfg.mobility_bound == 30.0
    assert cfg.episodes == 100
    assert cfg.max_steps == 100_000
    assert cfg.epsilon_coefficient == 0.0015
    assert cfg.goal_threshold == 0.95
    assert cfg.reward_goal == 100.0
    assert cfg.runs == 50


def test_load_config_layering(tmp_path):
    path = tmp_path / "conf.ini"
    path.write_text("[agent]\nalpha = 0.2\n\n[world]\nrelay_count = 4\n",
                    encoding="utf-8")
    cfg = load_config(str(path), {"relay_count": 5})
    assert cfg.alpha == 0.2
    assert cfg.relay_count == 5  # CLI override wins over the file
    assert cfg.gamma == 0.9     # untouched default


def test_load_config_unknown_key(tmp_path):
    path = tmp_path / "conf.ini"
    path.write_text("[agent]\nlearning_speed = 3\n", encoding="utf-8")
    with pytest.raises(ConfigurationError) as err:
        load_config(str(path))
    assert "learning_speed" in str(err.value)


def test_load_config_collects_all_violations(tmp_path):
    path = tmp_path / "conf.ini"
    path.write_text("[agent]\nalpha = hot\n\n[world]\nbogus = 1\n",
                    encoding="utf-8")
    with pytest.raises(ConfigurationError) as err:
        load_config(str(path))
    msg = str(err.value)
    assert "alpha" in msg and "bogus" in msg


def test_validation_names_offending_key():
    with pytest.raises(ConfigurationError) as err:
        load_config(None, {"path_loss_exponent": -1.0})
    assert "path_loss_exponent" in str(err.value)


def test_fingerprint_is_pure():
    a = load_config(None, {"relay_count": 4})
    b = load_config(None, {"relay_count": 4})
    c = load_config(None, {"relay_count": 5})
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_example_config_round_trips(tmp_path):
    text = write_example_config()
    path = tmp_path / "defaults.ini"
    path.write_text(text, encoding="utf-8")
    assert load_config(str(path)) == SimConfig()


def test_cmd_run_writes_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--mode", "decentralized", "--relays", "3", "--seed", "7",
                 "--episodes", "5", "--max-steps", "2000", "--quiet",
                 "--out", str(out)])
    assert code == 0
    rows = read_episodes_csv(out / "episodes.csv")
    assert len(rows) == 5
    assert all(r.relay_count == 3 and r.run == 7 for r in rows)
    fingerprint = (out / "config.resolved.ini").read_text(encoding="utf-8")
    assert fingerprint.startswith("# fingerprint: sha256:")


def test_cmd_batch_smoke_counts(tmp_path):
    out = tmp_path / "batch"
    code = main(["batch", "--smoke", "--seed", "0", "--quiet",
                 "--relay-counts", "1", "2", "--out", str(out)])
    assert code == 0
    rows = read_episodes_csv(out / "episodes.csv")
    # smoke preset: 2 runs x 10 episodes, both modes, two relay counts
    assert len(rows) == 2 * 10 * 2 * 2
    summary = read_summary_csv(out / "summary.csv")
    assert len(summary) == 4
    assert (out / "timings.csv").exists()


def test_cmd_aggregate_idempotent(tmp_path):
    out = tmp_path / "b"
    main(["batch", "--smoke", "--seed", "3", "--quiet",
          "--relay-counts", "1", "--out", str(out)])
    redone = tmp_path / "summary2.csv"
    code = main(["aggregate", str(out / "episodes.csv"), "--last-k", "10",
                 "--out", str(redone)])
    assert code == 0
    assert read_summary_csv(redone) == read_summary_csv(out / "summary.csv")


def test_cmd_dump_qtable(tmp_path):
    out = tmp_path / "q"
    code = main(["dump-qtable", "--relays", "2", "--seed", "5", "--episodes", "5",
                 "--max-steps", "2000", "--quiet", "--out", str(out)])
    assert code == 0
    files = sorted(os.listdir(out))
    assert files == ["qtable-R00.txt", "qtable-R01.txt"]
    text = (out / "qtable-R00.txt").read_text(encoding="utf-8")
    assert len(text.strip().splitlines()) == 28


def test_cli_error_is_single_line_and_nonzero(tmp_path, capsys):
    code = main(["run", "--relays", "-2", "--quiet", "--out", str(tmp_path / "x")])
    assert code != 0
    err = capsys.readouterr().err.strip().splitlines()
    assert any(line.startswith("ERROR:CONFIG:") for line in err)


def test_cli_subprocess_exit_codes(tmp_path):
    env = dict(os.environ)
    ok = subprocess.run(
        [sys.executable, "-m", "fogrelaysim.cli", "example-config"],
        capture_output=True, text=True, env=env)
    assert ok.returncode == 0
    assert "[agent]" in ok.stdout
    bad = subprocess.run(
        [sys.executable, "-m", "fogrelaysim.cli", "aggregate", "/no/such.csv"],
        capture_output=True, text=True, env=env)
    assert bad.returncode != 0
    assert "ERROR:" in bad.stderr
