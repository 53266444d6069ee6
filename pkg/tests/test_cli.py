import json
import subprocess
import sys

import pytest

from topodemon.cli import build_parser, main, spec_from_args


def run_cli(*args, env=None, cwd=None):
    return subprocess.run([sys.executable, "-m", "topodemon", *args], capture_output=True, text=True,
                          env=env, cwd=cwd, timeout=600)


def test_shot_trace_is_deterministic(capsys):
    argv = ["shot", "--n", "8", "--l", "3", "--p", "0.03", "--seed", "5", "--shot-index", "4", "--history"]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first
    lines = first.splitlines()
    assert lines[0] == "shot n=8 l=3 p=0.03 r=8 seed=5 index=4"
    assert lines[1].startswith("defects ")
    assert any(line.startswith("inferred_flip ") for line in lines)


def test_shot_changes_with_index(capsys):
    outs = set()
    for i in range(5):
        main(["shot", "--n", "10", "--l", "3", "--p", "0.05", "--shot-index", str(i)])
        outs.add(capsys.readouterr().out.split("\n", 2)[1])
    assert len(outs) > 1


def test_calibrate_output(capsys):
    assert main(["calibrate"]) == 0
    assert capsys.readouterr().out.strip() == "epsilon_m*R_0 = 0.0015479"


def test_calibrate_subprocess():
    out = run_cli("calibrate")
    assert out.returncode == 0 and out.stdout.strip() == "epsilon_m*R_0 = 0.0015479"


@pytest.mark.parametrize("argv,field", [
    (["shot", "--p", "0.9"], "p"),
    (["shot", "--n", "0"], "n_cols"),
    (["suppression", "--shots", "0"], "shots"),
    (["horizon", "--delta-e", "-3"], "delta_e"),
    (["calibrate", "--p", "1.5"], "p"),
])
def test_bad_parameters_exit_2(argv, field, tmp_path, capsys):
    code = main(argv + (["--out", str(tmp_path)] if argv[0] != "calibrate" else []))
    err = capsys.readouterr().err
    assert code == 2
    assert err.startswith(f"error: {field}:")


def test_help_lists_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["suppression"].format_help()
    for needle in ("default: 8000", "default: 146.5", "0.00154", "default: 20", "3,5,7", "--seed"):
        assert needle in text
    out = run_cli("--help")
    assert out.returncode == 0 and "N_max = 78" in out.stdout


def test_config_then_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"shots": 123, "l_list": [3, 5], "p_list": [0.01]}))
    args = build_parser().parse_args(["suppression", "--config", str(cfg), "--shots", "77"])
    spec = spec_from_args(args)
    assert spec.shots == 77 and spec.l_list == (3, 5) and spec.p_list == (0.01,) and spec.master_seed == 2024


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"shotz": 1}))
    assert main(["suppression", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error: shotz:")


def test_output_dir_from_env(tmp_path):
    env = {"TOPODEMON_OUT": str(tmp_path / "envout"), "PATH": "/usr/bin:/bin"}
    out = run_cli("temporal", "--n", "5", "--l", "3", "--max-rounds", "3", "--shots", "50", env=env, cwd=tmp_path)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "envout" / "temporal.csv").exists()
    meta = json.loads((tmp_path / "envout" / "temporal.json").read_text())
    assert meta["status"] == "complete" and meta["seed"] == 2024


def test_experiment_outputs_reproducible(tmp_path):
    args = ["info", "--shots", "200", "--n", "8", "--l", "3", "--f", "0,0.5,1"]
    for sub in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / sub)]) == 0
    assert (tmp_path / "a" / "info.csv").read_bytes() == (tmp_path / "b" / "info.csv").read_bytes()


def test_geometry_dump(capsys):
    assert main(["geometry-dump", "--n", "3", "--l", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["edges"]) == 2 * 3 * 2 + 3 + 2 and len(data["plaquettes"]) == 6


@pytest.mark.slow
def test_horizon_brackets_calibration(tmp_path, capsys):
    assert main(["horizon", "--shots", "400", "--threads", "0", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "horizon.json").read_text())
    n_max = meta["fits"]["horizon"]["parameters"]["n_max"]
    assert 75 <= n_max <= 80
