import json
import subprocess
import sys

import numpy as np
import pytest

from psrl_ssp.cli import build_parser, config_from_args, main
from psrl_ssp.planner import solve_optimal
from psrl_ssp.ssp_model import gridworld, random_mdp


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["run", "--env", "random-mdp", "--algo", "greedy", "--episodes", "40", "--runs", "2",
                 "--out", str(out)]) == 0
    assert "greedy on random-mdp" in capsys.readouterr().out
    for name in ("run_000.csv", "run_001.csv", "aggregate.csv", "theory_report.json", "config.json"):
        assert (out / name).exists()
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["algorithm"] == "greedy" and cfg["episodes"] == 40 and cfg["replications"] == 2


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"environment": "random-mdp", "episodes": 99, "algorithm": "optimism",
                                "cost_floor": "auto"}))
    args = build_parser().parse_args(["run", "--config", str(path), "--episodes", "7", "--delta", "0.2"])
    cfg = config_from_args(args)
    assert cfg.episodes == 7 and cfg.algorithm == "optimism" and cfg.delta == 0.2
    assert cfg.environment == "random-mdp" and cfg.cost_floor == "auto"


def test_cost_floor_flag_parsing():
    parse = build_parser().parse_args
    assert config_from_args(parse(["run", "--cost-floor", "auto"])).cost_floor == "auto"
    assert config_from_args(parse(["run", "--cost-floor", "0.05"])).cost_floor == 0.05


def test_diagnose_rewrites_report(tmp_path, capsys):
    main(["run", "--env", "gridworld", "--episodes", "30", "--runs", "2", "--out", str(tmp_path)])
    (tmp_path / "theory_report.json").unlink()
    capsys.readouterr()
    assert main(["diagnose", "--in", str(tmp_path), "--delta", "0.1"]) == 0
    printed = json.loads(capsys.readouterr().out)
    stored = json.loads((tmp_path / "theory_report.json").read_text())
    assert printed == stored and stored["coverage_target"] == 0.9


def test_plan_outputs_solution(tmp_path, capsys):
    main(["plan", "--env", "gridworld"])
    data = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(data["values"], solve_optimal(gridworld()).values)
    target = tmp_path / "plan.json"
    main(["plan", "--env", "random-mdp", "--env-seed", "3", "--out", str(target)])
    assert json.loads(target.read_text())["policy"] == solve_optimal(random_mdp(3)).policy.tolist()


def test_console_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "psrl_ssp.cli", "plan", "--env", "random-mdp"],
                          capture_output=True, text=True, check=True)
    assert "policy" in json.loads(proc.stdout)


def test_unknown_config_field_is_an_error(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"episodez": 3}))
    with pytest.raises(ValueError, match="episodez"):
        main(["run", "--config", str(path)])
