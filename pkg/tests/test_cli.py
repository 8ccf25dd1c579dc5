import json
import math
from pathlib import Path

import pandas as pd
import pytest
import yaml

from dascap.cli import EXIT_INVALID, EXIT_OK, load_config, main
from dascap.exceptions import ConfigError
from dascap.recipes import get_recipe, list_recipes
from dascap.runner import run_experiment
from dascap.schemas import ExperimentConfig

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SMALL_CAPACITY = {
    "experiment": "capacity",
    "geometry": {"radius": 1000.0, "r0": 1.0},
    "channel": {"alpha": 4.0, "sigma_sh_db": 8.0},
    "system": {"n_ports": 3, "csi_mode": "csit", "edge_snr_db": 10.0},
    "layout": {"kind": "circular", "radius_fraction": 0.5},
    "mc": {"n_samples": 4000, "seed": 5},
    "output": {"prefix": "small"},
}


def _write_config(tmp_path, document, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    return str(path)


def _config(**sections):
    doc = json.loads(json.dumps(SMALL_CAPACITY))
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    return doc


def _metrics(path):
    frame = pd.read_csv(path)
    return dict(zip(frame["metric"], frame["value"])), frame


# ==============================================================================
# RECIPES AND VALIDATION
# ==============================================================================
def test_list_recipes(capsys):
    assert main(["list-recipes"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 7
    assert any(line.startswith("example1-lowerbound") for line in lines)


@pytest.mark.parametrize("name", [recipe.name for recipe in list_recipes()])
def test_every_recipe_validates(name, capsys):
    assert main(["validate", "--recipe", name]) == EXIT_OK
    assert capsys.readouterr().out.startswith("OK:")


def test_show_recipe_round_trips_through_yaml(capsys):
    assert main(["show-recipe", "coherent-gain"]) == EXIT_OK
    document = yaml.safe_load(capsys.readouterr().out)
    assert ExperimentConfig.model_validate(document).experiment == "power_gain"


def test_radius_sweep_recipe_is_shadowing_free_and_brackets_the_optimum():
    config = get_recipe("rate-vs-radius").config()
    assert config.channel.sigma_sh_db == 0.0
    assert not config.mc.include_shadowing
    fractions = config.sweep["layout.radius_fraction"]
    assert min(fractions) < 0.325 and max(fractions) > 0.395
    assert set(config.sweep["layout.phase_deg"]) == {0.0, 30.0}
    placement = get_recipe("csit-radius-a2").config()
    assert (placement.channel.alpha, placement.system.csi_mode.value) == (2.0, "csit")
    assert not placement.mc.include_shadowing


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    assert main(["validate", str(path)]) == EXIT_OK


def test_validate_counts_sweep_points(tmp_path, capsys):
    path = _write_config(tmp_path, _config(sweep={"channel.alpha": [2.0, 4.0], "layout.radius_fraction": [0.3, 0.6]}))
    assert main(["validate", path]) == EXIT_OK
    assert "4 sweep point(s)" in capsys.readouterr().out


@pytest.mark.parametrize("document", [
    _config(channel={"alpha": -4.0}),
    _config(channel={"alhpa": 4.0}),
    _config(sweep={"channel.not_a_field": [1.0]}),
    _config(sweep={"mc.seed": [1, 2]}),
    _config(sweep={"channel.alpha": [4.0, -1.0]}),
    _config(interference={"gamma": [0.1, 0.2]}),
])
def test_invalid_config_exits_without_output(tmp_path, document):
    path = _write_config(tmp_path, document)
    out_dir = tmp_path / "out"
    assert main(["run", path, "--output-dir", str(out_dir)]) == EXIT_INVALID
    assert not out_dir.exists()


_SQUARE = {"region": "polygon", "radius": 1000.0,
           "vertices": [[0.0, 0.0], [1000.0, 0.0], [1000.0, 1000.0], [0.0, 1000.0]]}


@pytest.mark.parametrize("document, field", [
    (_config(layout={"radius_fraction": 1.5}), "layout.radius_fraction"),
    (_config(sweep={"layout.radius_fraction": [0.5, 1.5]}), "layout.radius_fraction"),
    (_config(layout={"kind": "explicit", "points": [[0.0, 0.0], [2000.0, 0.0], [0.0, 100.0]]}), "layout.points"),
    (_config(layout={"kind": "explicit", "points": [[0.0, 0.0]]}), "layout.points"),
    (_config(experiment="lloyd", channel={"alpha": 0.5}), "channel.alpha"),
    (_config(geometry={"region": "polygon", "vertices": [[0.0, 0.0], [0.0, 1000.0], [1000.0, 1000.0], [1000.0, 0.0]]}),
     "geometry"),
    (_config(geometry={"region": "polygon", "vertices": [[0.0, 0.0], [1000.0, 0.0], [300.0, 300.0], [0.0, 1000.0]]}),
     "geometry"),
    (_config(geometry=_SQUARE, layout={"radius_fraction": 0.2}, interference={"gamma": 0.5}), "interference.gamma"),
    (_config(channel={"sigma_n_sq": 0.0}), "channel.sigma_n_sq"),
    (_config(channel={"sigma_n_sq": 0.0}, interference={"gamma": 0.5}), "channel.sigma_n_sq"),
])
def test_domain_invariants_fail_validation(tmp_path, caplog, document, field):
    path = _write_config(tmp_path, document)
    assert main(["validate", path]) == EXIT_INVALID
    assert field in caplog.text
    out_dir = tmp_path / "out"
    assert main(["run", path, "--output-dir", str(out_dir)]) == EXIT_INVALID
    assert not out_dir.exists()


def test_zero_noise_with_interference_and_fixed_power_is_valid(tmp_path):
    document = _config(channel={"sigma_n_sq": 0.0}, interference={"gamma": 0.5}, system={"power": 1e6})
    assert main(["validate", _write_config(tmp_path, document)]) == EXIT_OK


def test_polygon_layout_inside_the_region_is_valid(tmp_path):
    document = _config(geometry=_SQUARE, layout={"radius_fraction": 0.2})
    assert main(["validate", _write_config(tmp_path, document)]) == EXIT_OK


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [capacity\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(listing))


def test_zero_threads_is_rejected(tmp_path):
    path = _write_config(tmp_path, SMALL_CAPACITY)
    assert main(["run", path, "--threads", "0", "--output-dir", str(tmp_path / "out")]) == EXIT_INVALID


def test_negative_seed_override_is_rejected(tmp_path):
    path = _write_config(tmp_path, SMALL_CAPACITY)
    assert main(["validate", path, "--seed-override", "-1"]) == EXIT_INVALID


def test_config_or_recipe_is_required():
    assert main(["validate"]) == EXIT_INVALID


# ==============================================================================
# RUNS
# ==============================================================================
def test_capacity_run_writes_results_and_manifest(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL_CAPACITY)
    out_dir = tmp_path / "out"
    assert main(["run", path, "--output-dir", str(out_dir), "--seed-override", "9"]) == EXIT_OK
    metrics, frame = _metrics(out_dir / "small-results.csv")
    assert list(frame.columns) == ["seed", "metric", "value", "std_error", "units"]
    assert set(frame["seed"]) == {9}
    assert metrics["rate_csit_all"] > 0.0
    assert metrics["mean_port_radius_over_R"] == pytest.approx(0.5)
    assert metrics["ase"] == pytest.approx(metrics["rate_csit_all"] / (math.pi * 1000.0 ** 2), rel=1e-9)
    manifest = json.loads((out_dir / "small-manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["mc"]["seed"] == 9
    assert manifest["sweep_points"] == 1
    assert not list(out_dir.glob(".small-partial-*"))
    assert not (out_dir / "small-trajectory.csv").exists()


def test_results_do_not_depend_on_worker_count(tmp_path):
    config = ExperimentConfig.model_validate(_config(sweep={"layout.radius_fraction": [0.3, 0.6]}))
    one = run_experiment(config, output_dir=str(tmp_path / "one"), n_workers=1)
    four = run_experiment(config, output_dir=str(tmp_path / "four"), n_workers=4)
    assert one.results.read_bytes() == four.results.read_bytes()
    frame = pd.read_csv(one.results)
    assert list(frame.columns)[0] == "layout.radius_fraction"
    assert sorted(set(frame["layout.radius_fraction"])) == [0.3, 0.6]


def test_lloyd_run(tmp_path):
    config = ExperimentConfig.model_validate({
        "experiment": "lloyd",
        "geometry": {"radius": 1.0, "radius_convention": "apothem", "r0": 0.0},
        "channel": {"alpha": 2.0},
        "system": {"n_ports": 3},
        "optimizer": {"restarts": 2, "lloyd_levels": 16},
        "mc": {"n_samples": 100, "seed": 3},
    })
    outputs = run_experiment(config, output_dir=str(tmp_path))
    metrics, _ = _metrics(outputs.results)
    assert 0.5 <= metrics["radius_over_R"] <= 0.65
    assert metrics["expected_path_loss"] > 0.0
    trajectory = pd.read_csv(outputs.trajectory)
    assert len(trajectory) == 3


def test_placement_run_writes_trajectory(tmp_path):
    config = ExperimentConfig.model_validate({
        "experiment": "placement",
        "geometry": {"radius": 1000.0, "radius_convention": "apothem"},
        "channel": {"alpha": 4.0},
        "layout": {"kind": "random"},
        "system": {"n_ports": 3},
        "optimizer": {"n_iter": 300, "restarts": 2, "snapshot_stride": 100, "window": 100},
        "mc": {"n_samples": 1000, "seed": 4},
    })
    outputs = run_experiment(config, output_dir=str(tmp_path))
    metrics, _ = _metrics(outputs.results)
    assert 0.0 < metrics["radius_over_R"] < 1.2
    assert metrics["rate_csir_all_best"] >= metrics["rate_csir_all_mean"]
    trajectory = pd.read_csv(outputs.trajectory)
    assert list(trajectory.columns) == ["restart", "iteration", "port", "x", "y"]
    assert len(trajectory) == 2 * 4 * 3
    assert sorted(set(trajectory["iteration"])) == [0, 100, 200, 300]


def test_power_allocation_run_reports_ratios(tmp_path):
    config = ExperimentConfig.model_validate({
        "experiment": "power_allocation",
        "geometry": {"radius": 1000.0, "radius_convention": "apothem"},
        "channel": {"alpha": 4.0},
        "layout": {"kind": "circular", "radius_fraction": 0.5, "center_port": True},
        "system": {"n_ports": 7},
        "interference": {"gamma": 0.5},
        "optimizer": {"n_iter": 300, "restarts": 1, "snapshot_stride": 100, "window": 100},
        "mc": {"n_samples": 1000, "seed": 5},
    })
    outputs = run_experiment(config, output_dir=str(tmp_path))
    metrics, _ = _metrics(outputs.results)
    assert metrics["power_ratio_central_peripheral"] > 0.0
    assert 0.0 <= metrics["power_ratio_central_total"] <= 1.0
    trajectory = pd.read_csv(outputs.trajectory)
    assert "power" in trajectory.columns
    totals = trajectory.groupby("iteration")["power"].sum()
    assert totals.to_numpy() == pytest.approx([totals.iloc[0]] * len(totals), rel=1e-9)


def test_coherent_power_gain_run(tmp_path):
    config = ExperimentConfig.model_validate({
        "experiment": "power_gain",
        "geometry": {"radius": 1000.0},
        "channel": {"alpha": 4.0, "sigma_sh_db": 0.0},
        "layout": {"kind": "colocated"},
        "system": {"n_ports": 6, "csi_mode": "csit"},
        "power_gain": {"reference_layout": "colocated", "reference_mode": "csir"},
        "mc": {"n_samples": 2000, "seed": 6, "include_shadowing": False},
    })
    outputs = run_experiment(config, output_dir=str(tmp_path))
    metrics, _ = _metrics(outputs.results)
    assert metrics["power_gain_db"] == pytest.approx(10.0 * math.log10(6.0), abs=1e-3)
    assert metrics["power_optimized"] < metrics["power_reference"]


def test_ase_run(tmp_path):
    config = ExperimentConfig.model_validate({
        "experiment": "ase",
        "geometry": {"radius": 500.0, "radius_convention": "apothem"},
        "channel": {"alpha": 3.0},
        "layout": {"kind": "circular", "radius_fraction": 0.55},
        "system": {"n_ports": 3},
        "interference": {"gamma": 0.5},
        "ase": {"reference_radius": 1000.0, "random_layouts": 2},
        "mc": {"n_samples": 1000, "seed": 7},
    })
    outputs = run_experiment(config, output_dir=str(tmp_path))
    metrics, _ = _metrics(outputs.results)
    assert metrics["ase_optimized"] == pytest.approx(metrics["rate_optimized"] / (math.pi * 500.0 ** 2))
    assert metrics["ase_random"] == pytest.approx(metrics["rate_random"] / (math.pi * 500.0 ** 2))
