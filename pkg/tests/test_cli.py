import json
import os

import pytest
import yaml

from roadplan import cli


def run_cli(args):
    return cli.main(args)


def test_plan_grid_emits_artifacts_and_report(tmp_path):
    out = tmp_path / "run1"
    code = run_cli(["plan-grid", "--fixture", "double_lane_change",
                    "--out", str(out)])
    assert code == 0
    assert (out / "grid_waypoints.csv").exists()
    assert (out / "grid_thinned.csv").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["command"] == "plan-grid"
    assert {f["path"] for f in report["files"]} == {
        str(out / "grid_waypoints.csv"), str(out / "grid_thinned.csv")}
    for f in report["files"]:
        assert len(f["sha256"]) == 64
    header = (out / "grid_waypoints.csv").read_text().splitlines()[0]
    assert header == "x,y"


def test_rerun_is_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_cli(["plan-grid", "--fixture", "double_lane_change", "--out", str(out1)])
    run_cli(["plan-grid", "--fixture", "double_lane_change", "--out", str(out2)])
    assert (out1 / "grid_waypoints.csv").read_bytes() == \
        (out2 / "grid_waypoints.csv").read_bytes()
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    assert [f["sha256"] for f in r1["files"]] == [f["sha256"] for f in r2["files"]]


def test_invalid_scenario_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("vehicles:\n  - id: 0\n    wheelbase: 2.7\n")
    code = run_cli(["plan-grid", "--scenario", str(bad), "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR invalid-input:")
    assert "wheelbase" in err or "initial" in err


def test_missing_planner_section_exits_2(tmp_path, capsys):
    doc = tmp_path / "empty.yaml"
    doc.write_text("name: empty\n")
    code = run_cli(["plan-grid", "--scenario", str(doc), "--out", str(tmp_path)])
    assert code == 2
    assert "planner" in capsys.readouterr().err


def test_dump_config_round_trip(tmp_path, capsys):
    code = run_cli(["dump-config", "--fixture", "scenario2", "--out", str(tmp_path)])
    assert code == 0
    echoed = yaml.safe_load(capsys.readouterr().out)
    from roadplan.scenario import load_fixture, parse_scenario
    assert parse_scenario(echoed) == load_fixture("scenario2")


def test_track_command(tmp_path):
    out = tmp_path / "track"
    code = run_cli(["track", "--fixture", "tracking_track", "--out", str(out)])
    assert code == 0
    lines = (out / "tracking.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,x_d,y_d,err"
    assert len(lines) > 100
    report = json.loads((out / "report.json").read_text())
    assert report["scalars"]["max_error"] < 0.05


def test_mpc_command_emits_per_vehicle_and_round_log(tmp_path):
    out = tmp_path / "mpc"
    doc = tmp_path / "mini.yaml"
    doc.write_text(yaml.safe_dump({
        "vehicles": [
            {"id": 0, "initial": [0.0, 0.0, 0.0, 5.0, 0.0],
             "target": [25.0, 0.0]},
        ],
        "mpc": {"time_limit": 10.0},
    }))
    code = run_cli(["mpc", "--scenario", str(doc), "--out", str(out)])
    assert code == 0
    assert (out / "vehicle_0.csv").exists()
    rounds = (out / "rounds.csv").read_text().splitlines()
    assert rounds[0] == "round,t,vehicle,solve_status,priority_rank,min_ellipse_value"
    assert len(rounds) >= 2


@pytest.mark.slow
def test_solve_avoidance_command(tmp_path):
    out = tmp_path / "avoid"
    code = run_cli(["solve-avoidance", "--n", "51", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert abs(report["scalars"]["d"] - 19.62075) < 0.05
    lines = (out / "avoidance_traj.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,psi,v,delta,a,w"
    assert len(lines) == 52


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["--help"])
    out = capsys.readouterr().out
    for name in ("plan-grid", "plan-lattice", "solve-parking", "solve-avoidance",
                 "sensitivity", "mpc", "track", "verify", "serve"):
        assert name in out


def test_verify_subset_of_fast_criteria(capsys):
    code = run_cli(["verify", "--criteria", "5,6,10"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("PASS") == 3
    for cid in ("criterion 5", "criterion 6", "criterion 10"):
        assert cid in out


@pytest.mark.slow
def test_plan_lattice_command(tmp_path):
    out = tmp_path / "lat"
    code = run_cli(["plan-lattice", "--fixture", "lattice_corner",
                    "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["scalars"]["max_steer"] <= 0.5236
    lines = (out / "lattice_states.csv").read_text().splitlines()
    assert lines[0] == "x,y,psi"
