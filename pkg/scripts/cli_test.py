# python imports
import csv
import json
import os

# third party imports
import pytest

# local imports
from hebblab.cli import EXIT_OK, EXIT_USAGE, main, parse_range
from hebblab.errors import ConfigurationError
from hebblab.simulate import WeightTrajectory

# set variables
SMALL_CONFIG = {
    "root_seed": 3,
    "network": {"N": 3, "T_train": 24.0},
    "training": {"K": 2},
    "integrator": {"method": "RK4", "fixed_dt": 0.01},
    "fixed_points": {"random_seeds": 20},
}
ANALYSIS_CONFIG = {
    **SMALL_CONFIG,
    "memory": {"n_type2": 4, "n_type3": 20},
    "basins": {"resolution": 5, "x3_values": [0.0]},
}
DEMO_CONFIG = {"fixed_points": {"random_seeds": 40}, "memory": {"n_type2": 8}}


def write_config(tmp_path, data=None):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data or SMALL_CONFIG))
    return str(path)


def read_summary(out_dir):
    with open(os.path.join(out_dir, "run_summary.json"), encoding="utf-8") as fh:
        return json.load(fh)


def test_parse_range():
    assert parse_range("0:40") == (0.0, 40.0)
    with pytest.raises(ConfigurationError):
        parse_range("40:0")
    with pytest.raises(ConfigurationError):
        parse_range("forty")


def test_schema_prints_config_schema(tmp_path, capsys):
    assert main(["schema", "--out", str(tmp_path)]) == EXIT_OK
    schema = json.loads(capsys.readouterr().out)
    assert "network" in schema["properties"]


def test_missing_snapshot_is_a_usage_error(tmp_path):
    out = str(tmp_path / "run")
    assert main(["scan", "--out", out]) == EXIT_USAGE
    summary = read_summary(out)
    assert summary["exit_code"] == EXIT_USAGE
    assert "trajectory" in summary["error"].lower()


def test_invalid_config_is_a_usage_error(tmp_path):
    config = write_config(tmp_path, {"network": {"neurons": 3}})
    assert main(["train", "--config", config, "--out", str(tmp_path / "run")]) == EXIT_USAGE


def test_train_then_scan(tmp_path):
    out = str(tmp_path / "run")
    config = write_config(tmp_path)
    assert main(["train", "--config", config, "--out", out]) == EXIT_OK
    for name in ("trajectory.hbl", "trajectory.csv", "weights_summary.csv", "training_set.csv", "config.json"):
        assert os.path.exists(os.path.join(out, name))
    traj = WeightTrajectory.load(os.path.join(out, "trajectory.hbl"))
    assert len(traj) == 241
    with open(os.path.join(out, "trajectory.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "w_0_1", "w_0_2", "w_1_2"]
    assert len(rows) == 242
    assert read_summary(out)["metrics"]["weights_inside_box"]

    assert main(["scan", "--config", config, "--out", out, "--stride", "20"]) == EXIT_OK
    for name in ("branches.csv", "events.csv", "bifurcation.svg"):
        assert os.path.exists(os.path.join(out, name))
    summary = read_summary(out)
    assert summary["command"] == "scan"
    assert summary["metrics"]["branches"] >= 1


def test_seed_flag_is_recorded(tmp_path):
    out = str(tmp_path / "run")
    assert main(["train", "--config", write_config(tmp_path), "--out", out, "--seed", "9"]) == EXIT_OK
    assert read_summary(out)["config"]["root_seed"] == 9


def trained(tmp_path, data=None):
    out = str(tmp_path / "run")
    config = write_config(tmp_path, data or ANALYSIS_CONFIG)
    assert main(["train", "--config", config, "--out", out]) == EXIT_OK
    return config, out


def test_memories_with_forgetting(tmp_path):
    config, out = trained(tmp_path)
    args = ["memories", "--config", config, "--out", out, "--t", "24", "--forgetting", "--stride", "20"]
    assert main(args) == EXIT_OK
    for name in ("memories_t24.csv", "forgetting.csv", "events.csv"):
        assert os.path.exists(os.path.join(out, name))
    metrics = read_summary(out)["metrics"]
    assert metrics["memories"]["24"] == {"True": 0, "Blended": 1, "Spurious": 0, "unresolved_trials": 0}
    assert metrics["forgetting_incidents"] == 0
    assert metrics["unlabeled_incidents"] == 0


def test_basins_command(tmp_path):
    config, out = trained(tmp_path)
    assert main(["basins", "--config", config, "--out", out]) == EXIT_OK
    for name in ("census.csv", "memories.csv", "basin_00.ppm", "basin_00.csv", "palette.csv", "saddle_boundaries.csv"):
        assert os.path.exists(os.path.join(out, name))
    metrics = read_summary(out)["metrics"]
    assert metrics["census"] == {"Stable": 1, "UsefulSaddle": 0, "OtherUnstable": 0}
    assert metrics["rasters"] == [{"x3": 0.0, "unresolved": 0}]
    assert metrics["flagged_saddles"] == 0


def test_manifold_command(tmp_path):
    config, out = trained(tmp_path)
    assert main(["manifold", "--config", config, "--out", out]) == EXIT_OK
    for name in ("crossings.csv", "projection.csv"):
        assert os.path.exists(os.path.join(out, name))
    metrics = read_summary(out)["metrics"]
    assert metrics["crossings"] == []
    assert "section_curves" not in metrics


def census_changes(path):
    with open(path, newline="") as fh:
        rows = [(float(row["t"]), int(row["stable"])) for row in csv.DictReader(fh)]
    counts = {stable for _, stable in rows}
    changes = [
        0.5 * (t0 + t1)
        for (t0, before), (t1, after) in zip(rows[:-1], rows[1:])
        if before != after
    ]
    return counts, changes


@pytest.mark.slow
def test_demo_crosses_out_in_and_out(tmp_path):
    out = str(tmp_path / "demo")
    assert main(["demo-n3", "--config", write_config(tmp_path, DEMO_CONFIG), "--out", out]) == EXIT_OK
    metrics = read_summary(out)["metrics"]

    crossings = metrics["crossings"]
    flips = [e for e in metrics["events"] if e["kind"] in ("Pitchfork", "PitchforkReverse")]
    assert [c["direction"] for c in crossings][:3] == ["leaving", "entering", "leaving"]
    assert len(flips) == len(crossings)
    for crossing, flip in zip(crossings, flips):
        assert crossing["direction"] == ("leaving" if flip["kind"] == "Pitchfork" else "entering")
        assert abs(crossing["t"] - flip["t_star"]) <= 0.5

    # the census is sampled once per time unit
    counts, changes = census_changes(os.path.join(out, "census_timeline.csv"))
    assert counts <= {1, 2}
    assert len(changes) == len(crossings)
    for crossing, change in zip(crossings, changes):
        assert abs(crossing["t"] - change) <= 1.0

    assert metrics["unlabeled_incidents"] == 0
    assert metrics["forgetting_incidents"] >= 1
    first_loss = min(record["t_star"] for record in metrics["forgetting"])
    assert all(record["label"] != "Unlabeled" for record in metrics["forgetting"])
    assert any(e["kind"] == "Pitchfork" and e["t_star"] > first_loss for e in metrics["events"])
