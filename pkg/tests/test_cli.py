import json
import subprocess
import sys

import numpy as np

from magiciv import ScenarioConfig, gen_dataset
from magiciv.cli import main
from magiciv.data import write_csv


def _sim_csv(tmp_path, p=10, n=300, seed=5, name="sim.csv"):
    cfg = ScenarioConfig(p=p, n=n, scenario="I", seed=seed)
    ds, _ = gen_dataset(cfg, 0)
    path = tmp_path / name
    write_csv(ds, path)
    return path, ds


def test_estimate_writes_expected_schema(tmp_path, capsys):
    path, ds = _sim_csv(tmp_path)
    out = tmp_path / "est.json"
    code = main([
        "estimate", "--input", str(path), "--outcome", "y", "--exposure", "d",
        "--instruments", ",".join(ds.names()), "--output", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["r"] == 45
    assert payload["p"] == 10 and payload["q"] == 2 and payload["n"] == 300
    assert payload["schema_version"] == "1"
    assert payload["growth"]["r2_over_n"] == 45**2 / 300
    assert payload["growth"]["r3_over_n"] == 45**3 / 300
    assert payload["plan"]["orders"]["2"][0] == [0, 1]
    assert "tsls" in payload["baselines"] and "efficient_fixed_r" in payload["baselines"]
    assert payload["ci_low"] <= payload["beta_hat"] <= payload["ci_high"]
    assert payload["f_stat"] is not None
    for key in ("beta_hat", "se", "ci_low", "ci_high", "ci_level", "j_stat", "j_df",
                "j_pvalue", "q_min", "r", "n", "p", "q", "boundary_flag", "ridge_used",
                "f_stat", "plan"):
        assert key in payload


def test_estimate_single_instrument_is_data_error(tmp_path, capsys):
    path = tmp_path / "p1.csv"
    path.write_text("y,d,z1\n1.0,0.5,1\n2.0,1.5,0\n0.5,0.25,1\n")
    code = main(["estimate", "--input", str(path), "--outcome", "y",
                 "--exposure", "d", "--instruments", "z1"])
    assert code == 1
    assert "requires p >= 2" in capsys.readouterr().err


def test_estimate_missing_column_is_data_error(tmp_path, capsys):
    path, _ = _sim_csv(tmp_path, p=3)
    code = main(["estimate", "--input", str(path), "--outcome", "y",
                 "--exposure", "d", "--instruments", "z1,zz"])
    assert code == 1
    assert "missing column" in capsys.readouterr().err


def test_estimate_duplicated_instrument_triggers_ridge(tmp_path, capsys):
    # duplicating an instrument duplicates an interaction column, making the
    # weighting matrix exactly singular: the ridge ladder must engage
    cfg = ScenarioConfig(p=2, n=250, c=8.0, seed=9)
    ds, _ = gen_dataset(cfg, 0)
    z = np.column_stack([ds.z, ds.z[:, 0]])
    from magiciv import Dataset

    tripled = Dataset(y=ds.y, d=ds.d, z=z, instrument_names=("z1", "z2", "z3"))
    path = tmp_path / "dup.csv"
    write_csv(tripled, path)
    out = tmp_path / "dup.json"
    code = main(["estimate", "--input", str(path), "--outcome", "y",
                 "--exposure", "d", "--instruments", "z1,z2,z3",
                 "--output", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["ridge_used"] is True
    assert payload["f_stat"] is None  # diagnostic design is rank deficient
    assert payload["f_stat_error"]


def test_estimate_numerical_failure_exit_code(tmp_path, capsys):
    # six observations cannot support the seven-column order-3 basis
    path, ds = _sim_csv(tmp_path, p=3, n=6, name="tiny.csv")
    code = main(["estimate", "--input", str(path), "--outcome", "y",
                 "--exposure", "d", "--instruments", ",".join(ds.names()),
                 "--q", "3"])
    assert code == 2
    assert "need n >=" in capsys.readouterr().err


def test_estimate_exactly_identified_has_null_pvalue(tmp_path):
    path, ds = _sim_csv(tmp_path, p=2, n=200, name="p2.csv")
    out = tmp_path / "p2.json"
    code = main(["estimate", "--input", str(path), "--outcome", "y",
                 "--exposure", "d", "--instruments", ",".join(ds.names()),
                 "--output", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["r"] == 1
    assert payload["j_pvalue"] is None and payload["j_df"] == 0


def test_simulate_runs_are_byte_identical(tmp_path, capsys):
    args = ["simulate", "--scenario", "I", "--p", "4", "--n", "200",
            "--reps", "6", "--seed", "3", "--c", "8.0"]
    out1, out2, out3 = (tmp_path / f"mc{i}.json" for i in (1, 2, 3))
    assert main(args + ["--output", str(out1)]) == 0
    assert main(args + ["--output", str(out2)]) == 0
    assert main(args + ["--workers", "2", "--output", str(out3)]) == 0
    assert out1.read_bytes() == out2.read_bytes() == out3.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["reps"] == 6
    assert payload["config"]["seed"] == 3


def test_simulate_reps_zero_is_config_error(capsys):
    code = main(["simulate", "--p", "4", "--n", "100", "--reps", "0"])
    assert code == 1
    assert "reps" in capsys.readouterr().err


def test_simulate_excess_exclusions_exit_code(capsys):
    code = main(["simulate", "--p", "2", "--n", "2", "--reps", "4", "--methods", "magic"])
    assert code == 3


def test_simulate_table_and_emit_data(tmp_path, capsys):
    out = tmp_path / "mc.json"
    emitted = tmp_path / "rep0.csv"
    code = main(["simulate", "--p", "4", "--n", "150", "--reps", "2", "--seed", "4",
                 "--c", "8.0", "--output", str(out), "--emit-data", str(emitted)])
    assert code == 0
    table = capsys.readouterr().out
    assert "MAGIC" in table and "TSLS" in table
    assert emitted.exists()
    from magiciv import load_csv, validate

    back = load_csv(emitted, "y", "d", ["z1", "z2", "z3", "z4"])
    assert validate(back) == []


def test_simulate_config_file_with_flag_override(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        "# Monte Carlo settings\n"
        "scenario = I\n"
        "p = 4\n"
        "n = 150\n"
        "reps = 2\n"
        "seed = 12\n"
        "c = 8.0\n"
    )
    out = tmp_path / "mc.json"
    code = main(["simulate", "--config", str(cfg_file), "--reps", "3",
                 "--output", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["config"]["reps"] == 3  # flag wins
    assert payload["config"]["p"] == 4
    assert payload["reps"] == 3


def test_rerunning_from_config_echo_reproduces_output(tmp_path):
    out1 = tmp_path / "a.json"
    code = main(["simulate", "--p", "4", "--n", "150", "--reps", "3", "--seed", "31",
                 "--c", "8.0", "--output", str(out1)])
    assert code == 0
    echo = json.loads(out1.read_text())["config"]
    cfg_file = tmp_path / "echo.cfg"
    lines = []
    for key, value in echo.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    cfg_file.write_text("\n".join(lines) + "\n")
    out2 = tmp_path / "b.json"
    assert main(["simulate", "--config", str(cfg_file), "--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_config_file_unknown_key(tmp_path, capsys):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("repz = 3\n")
    code = main(["simulate", "--config", str(cfg_file)])
    assert code == 1
    assert "unknown config key" in capsys.readouterr().err


def test_oracle_check_default_passes(capsys):
    assert main(["oracle-check"]) == 0
    out = capsys.readouterr().out
    assert "population beta" in out and "PASS" in out


def test_oracle_check_dependent_expected_fail(capsys):
    assert main(["oracle-check", "--p", "3", "--dependent", "true"]) == 0
    assert "fails as expected" in capsys.readouterr().out


def test_oracle_check_guard(capsys):
    assert main(["oracle-check", "--p", "13"]) == 1
    assert "oracle supports" in capsys.readouterr().err


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "magiciv", "--version"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "magiciv" in proc.stdout
