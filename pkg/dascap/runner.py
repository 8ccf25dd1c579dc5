# dascap/runner.py
"""
Experiment execution: expands the sweep, runs every point, and writes the
results CSV, the trajectory CSV and the JSON manifest. Files are staged in a
hidden directory and only moved into place once every point succeeded.
"""
import csv
import json
import logging
import math
import os
import platform
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from . import __version__, settings
from .capacity import PowerAllocation, Strategy
from .ergodic import (PowerCase, area_spectral_efficiency, calibrate_edge_power, cell_average_rate,
                      jensen_lower_bound, power_gain)
from .geometry import (PortLayout, Region, circular_layout, colocated_layout, layout_radii, peripheral_radius,
                       random_layout)
from .placement import (OptimizeTarget, PlacementRun, StepSchedule, TargetKind, lloyd_multistart,
                        min_power_for_target, optimize_power_allocation, power_ratios, run_restarts,
                        stochastic_update_placement)
from .schemas import ExperimentConfig, ResultRow
from .utils.streams import PLACEMENT_STREAM, block_generator, fan_out

logger = logging.getLogger(__name__)

RATE_UNITS = "bit/s/Hz"
ASE_UNITS = "bit/s/Hz/area"


@dataclass
class PointResult:
    rows: List[ResultRow]
    trajectory: List[Dict] = field(default_factory=list)


@dataclass
class RunOutputs:
    results: Path
    manifest: Path
    trajectory: Optional[Path]
    n_rows: int


# ==============================================================================
# CONFIG -> DOMAIN OBJECTS
# ==============================================================================
def _region(cfg: ExperimentConfig) -> Region:
    return cfg.geometry.build_region()


def _params(cfg: ExperimentConfig):
    return cfg.channel.to_params(cfg.geometry.r0)


def _power(cfg: ExperimentConfig, params) -> float:
    if cfg.system.power is not None:
        return cfg.system.power
    return calibrate_edge_power(cfg.geometry.radius, params, cfg.system.edge_snr_db)


def _layout(cfg: ExperimentConfig, region: Region, n_workers: int = 1) -> PortLayout:
    lay, N = cfg.layout, cfg.system.n_ports
    if lay.kind == "circular":
        return circular_layout(N, lay.radius_fraction * cfg.geometry.radius, region, lay.center_port,
                               math.radians(lay.phase_deg))
    if lay.kind == "colocated":
        return colocated_layout(N, region)
    if lay.kind == "random":
        return random_layout(N, region, block_generator(cfg.mc.seed, 0, PLACEMENT_STREAM))
    if lay.kind == "explicit":
        if len(lay.points) != N:
            raise ValueError(f"layout.points has {len(lay.points)} entries, system.n_ports is {N}")
        return PortLayout(np.asarray(lay.points, dtype=float), region)
    best, _ = lloyd_multistart(N, region, cfg.channel.alpha, restarts=cfg.optimizer.restarts, seed=cfg.mc.seed,
                               n_workers=n_workers, r0=cfg.geometry.r0, levels=cfg.optimizer.lloyd_levels,
                               max_iter=cfg.optimizer.lloyd_max_iter)
    return best.layout


def _position_schedule(cfg: ExperimentConfig) -> StepSchedule:
    opt = cfg.optimizer
    a = opt.a if opt.a is not None else opt.step_scale * cfg.geometry.radius ** 2
    return StepSchedule(kind=opt.schedule, a=a, p=opt.p, offset=opt.offset)


def _power_schedule(cfg: ExperimentConfig, power: float) -> StepSchedule:
    opt = cfg.optimizer
    return StepSchedule(kind=opt.schedule, a=opt.power_step_scale * power ** 2, p=opt.p, offset=opt.offset)


def _row(coords: Dict, cfg: ExperimentConfig, metric: str, value: float, std_error: Optional[float] = None,
         units: str = "") -> ResultRow:
    return ResultRow(coords=coords, seed=cfg.mc.seed, metric=metric, value=float(value),
                     std_error=None if std_error is None else float(std_error), units=units)


def _rate_metric(cfg: ExperimentConfig) -> str:
    return f"rate_{cfg.system.csi_mode.value}_{cfg.system.strategy.value}"


# ==============================================================================
# EXPERIMENTS
# ==============================================================================
def _run_capacity(cfg: ExperimentConfig, coords: Dict, n_workers: int) -> PointResult:
    region, params = _region(cfg), _params(cfg)
    power = _power(cfg, params)
    layout = _layout(cfg, region, n_workers)
    est = cell_average_rate(layout, power, cfg.system.csi_mode, cfg.system.strategy, params,
                            cfg.interference.to_params(), cfg.mc.to_config(), cfg.system.n_antennas, n_workers)
    rows = [
        _row(coords, cfg, _rate_metric(cfg), est.mean, est.std_error, RATE_UNITS),
        _row(coords, cfg, "ase", area_spectral_efficiency(est.mean, cfg.geometry.radius, cfg.ase.area_mode),
             units=ASE_UNITS),
        _row(coords, cfg, "mean_port_radius_over_R", layout_radii(layout).mean() / cfg.geometry.radius),
    ]
    if params.sigma_n_sq > 0:
        rows.append(_row(coords, cfg, "jensen_lower_bound", jensen_lower_bound(layout, power, params),
                         units=RATE_UNITS))
    return PointResult(rows)


def _run_lloyd(cfg: ExperimentConfig, coords: Dict, n_workers: int) -> PointResult:
    region, params = _region(cfg), _params(cfg)
    best, summary = lloyd_multistart(cfg.system.n_ports, region, params.alpha, restarts=cfg.optimizer.restarts,
                                     seed=cfg.mc.seed, n_workers=n_workers, r0=cfg.geometry.r0,
                                     levels=cfg.optimizer.lloyd_levels, max_iter=cfg.optimizer.lloyd_max_iter,
                                     tol=cfg.optimizer.tol)
    R = cfg.geometry.radius
    rows = [
        _row(coords, cfg, "radius_over_R", layout_radii(best.layout).mean() / R),
        _row(coords, cfg, "radius_spread", summary.spread),
        _row(coords, cfg, "expected_path_loss", best.objective * params.beta, units="path loss"),
        _row(coords, cfg, "converged", float(best.converged)),
    ]
    if params.sigma_n_sq > 0:
        rows.append(_row(coords, cfg, "jensen_lower_bound",
                         jensen_lower_bound(best.layout, _power(cfg, params), params), units=RATE_UNITS))
    restart = next(k for k, run in enumerate(summary.runs) if run is best)
    trajectory = [{**coords, "restart": restart, "iteration": best.iterations, "port": n, "x": x, "y": y}
                  for n, (x, y) in enumerate(best.layout.ports)]
    return PointResult(rows, trajectory)


def _placement_factory(cfg: ExperimentConfig, rng: np.random.Generator) -> PlacementRun:
    """One restart of a placement or power-allocation experiment."""
    region, params = _region(cfg), _params(cfg)
    power = _power(cfg, params)
    opt = cfg.optimizer
    init = random_layout(cfg.system.n_ports, region, rng) if cfg.layout.kind == "random" else _layout(cfg, region)
    intf = cfg.interference.to_params()
    intf = intf if intf.active else None
    common = dict(strategy=cfg.system.strategy, n_antennas=cfg.system.n_antennas,
                  include_fading=opt.include_fading, include_shadowing=cfg.mc.include_shadowing,
                  snapshot_stride=opt.snapshot_stride, tol=opt.tol, window=opt.window,
                  max_displacement=None if opt.max_displacement_fraction is None
                  else opt.max_displacement_fraction * cfg.geometry.radius)
    if cfg.experiment == "power_allocation" or opt.optimize_power:
        joint = cfg.experiment == "placement"
        return optimize_power_allocation(init, power * init.n_ports, cfg.system.csi_mode, params, intf,
                                         _power_schedule(cfg, power), opt.n_iter, rng, joint=joint,
                                         position_schedule=_position_schedule(cfg) if joint else None, **common)
    return stochastic_update_placement(init, power, cfg.system.csi_mode, _position_schedule(cfg), params, intf,
                                       opt.n_iter, rng, **common)


def _run_placement(cfg: ExperimentConfig, coords: Dict, n_workers: int) -> PointResult:
    params = _params(cfg)
    power = _power(cfg, params)
    R = cfg.geometry.radius
    summary = run_restarts(partial(_placement_factory, cfg), cfg.optimizer.restarts, cfg.mc.seed, n_workers)
    intf = cfg.interference.to_params()
    mc = cfg.mc.to_config()

    rates = []
    for run in summary.runs:
        powers = run.final_powers or PowerAllocation.uniform(run.final_layout.n_ports, power)
        rates.append(cell_average_rate(run.final_layout, powers, cfg.system.csi_mode, cfg.system.strategy, params,
                                       intf, mc, cfg.system.n_antennas))
    best = int(np.argmax([r.mean for r in rates]))
    rows = [
        _row(coords, cfg, "mean_radius", summary.mean_radius, units="length"),
        _row(coords, cfg, "radius_over_R", summary.mean_radius / R),
        _row(coords, cfg, "peripheral_radius_over_R",
             np.mean([peripheral_radius(r.final_layout) for r in summary.runs]) / R),
        _row(coords, cfg, "radius_spread", summary.spread),
        _row(coords, cfg, "converged_fraction", np.mean([r.converged for r in summary.runs])),
        _row(coords, cfg, f"{_rate_metric(cfg)}_best", rates[best].mean, rates[best].std_error, RATE_UNITS),
        _row(coords, cfg, f"{_rate_metric(cfg)}_mean", np.mean([r.mean for r in rates]), units=RATE_UNITS),
    ]
    final_powers = [r.final_powers for r in summary.runs if r.final_powers is not None]
    if final_powers:
        ratios = np.array([power_ratios(r.final_layout, r.final_powers) for r in summary.runs])
        rows.append(_row(coords, cfg, "power_ratio_central_peripheral", ratios[:, 0].mean()))
        rows.append(_row(coords, cfg, "power_ratio_central_total", ratios[:, 1].mean()))

    target = OptimizeTarget(TargetKind.MIN_POWER_GIVEN_RATE, cfg.optimizer.target_rate) \
        if cfg.optimizer.target_rate is not None else OptimizeTarget()
    if target.kind is TargetKind.MIN_POWER_GIVEN_RATE:
        s_min = min_power_for_target(summary.runs[best].final_layout, target.target_rate, cfg.system.csi_mode,
                                     params, intf, mc, strategy=cfg.system.strategy,
                                     n_antennas=cfg.system.n_antennas, n_workers=n_workers)
        rows.append(_row(coords, cfg, "min_power", s_min, units="power"))

    trajectory = []
    for k, run in enumerate(summary.runs):
        for s_idx, it in enumerate(run.snapshot_iterations):
            for n, (x, y) in enumerate(run.snapshots[s_idx]):
                entry = {**coords, "restart": k, "iteration": int(it), "port": n, "x": x, "y": y}
                if run.power_snapshots is not None:
                    entry["power"] = run.power_snapshots[s_idx][n]
                trajectory.append(entry)
    return PointResult(rows, trajectory)


def _run_power_gain(cfg: ExperimentConfig, coords: Dict, n_workers: int) -> PointResult:
    region, params = _region(cfg), _params(cfg)
    power = _power(cfg, params)
    N = cfg.system.n_ports
    intf = cfg.interference.to_params()
    mc = cfg.mc.to_config()
    if cfg.power_gain.reference_layout == "colocated":
        ref_layout = colocated_layout(N, region)
    else:
        ref_layout = circular_layout(N, cfg.layout.radius_fraction * cfg.geometry.radius, region,
                                     cfg.layout.center_port, math.radians(cfg.layout.phase_deg))
    reference = PowerCase(ref_layout, cfg.power_gain.reference_mode, Strategy.ALL, params, intf,
                          cfg.system.n_antennas)
    optimized = PowerCase(_layout(cfg, region, n_workers), cfg.system.csi_mode, cfg.system.strategy, params, intf,
                          cfg.system.n_antennas)
    target = cfg.power_gain.target_rate
    if target is None:
        target = cell_average_rate(reference.layout, power, reference.mode, reference.strategy, params, intf, mc,
                                   reference.n_antennas, n_workers).mean
    s_ref = min_power_for_target(reference.layout, target, reference.mode, params, intf, mc,
                                 strategy=reference.strategy, n_antennas=reference.n_antennas, n_workers=n_workers)
    gain = power_gain(reference, optimized, target, mc, n_workers)
    return PointResult([
        _row(coords, cfg, "target_rate", target, units=RATE_UNITS),
        _row(coords, cfg, "power_reference", s_ref, units="power"),
        _row(coords, cfg, "power_optimized", s_ref / 10.0 ** (gain / 10.0), units="power"),
        _row(coords, cfg, "power_gain_db", gain, units="dB"),
    ])


def _run_ase(cfg: ExperimentConfig, coords: Dict, n_workers: int) -> PointResult:
    region, params = _region(cfg), _params(cfg)
    R = cfg.geometry.radius
    # Transmit power per unit area stays fixed across cell sizes.
    power = calibrate_edge_power(cfg.ase.reference_radius, params, cfg.system.edge_snr_db) \
        * (R / cfg.ase.reference_radius) ** 2
    intf = cfg.interference.to_params()
    mc = cfg.mc.to_config()
    N = cfg.system.n_ports
    args = (cfg.system.csi_mode, cfg.system.strategy, params, intf, mc, cfg.system.n_antennas, n_workers)
    optimal = cell_average_rate(_layout(cfg, region, n_workers), power, *args)
    random_rates = [
        cell_average_rate(random_layout(N, region, block_generator(cfg.mc.seed, k, PLACEMENT_STREAM)),
                          power, *args).mean
        for k in range(cfg.ase.random_layouts)
    ]
    c_random = float(np.mean(random_rates))
    se_random = float(np.std(random_rates, ddof=1) / math.sqrt(len(random_rates))) if len(random_rates) > 1 else None
    mode = cfg.ase.area_mode
    return PointResult([
        _row(coords, cfg, "rate_optimized", optimal.mean, optimal.std_error, RATE_UNITS),
        _row(coords, cfg, "rate_random", c_random, se_random, RATE_UNITS),
        _row(coords, cfg, "ase_optimized", area_spectral_efficiency(optimal.mean, R, mode), units=ASE_UNITS),
        _row(coords, cfg, "ase_random", area_spectral_efficiency(c_random, R, mode), units=ASE_UNITS),
    ])


EXPERIMENT_RUNNERS = {
    "capacity": _run_capacity,
    "lloyd": _run_lloyd,
    "placement": _run_placement,
    "power_allocation": _run_placement,
    "power_gain": _run_power_gain,
    "ase": _run_ase,
}


def _run_point(cfg: ExperimentConfig, coords: Dict, n_workers: int) -> PointResult:
    logger.info(f"Running {cfg.experiment} point {coords or '(no sweep)'}")
    return EXPERIMENT_RUNNERS[cfg.experiment](cfg, coords, n_workers)


# ==============================================================================
# OUTPUT
# ==============================================================================
def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n", quoting=csv.QUOTE_MINIMAL,
                 encoding="utf-8")


def _results_frame(rows: List[ResultRow], sweep_keys: List[str]) -> pd.DataFrame:
    records = []
    for r in rows:
        record = {key: r.coords.get(key) for key in sweep_keys}
        record.update(seed=r.seed, metric=r.metric, value=r.value, std_error=r.std_error, units=r.units)
        records.append(record)
    return pd.DataFrame.from_records(records, columns=[*sweep_keys, "seed", "metric", "value", "std_error", "units"])


def run_experiment(config: ExperimentConfig, output_dir: Optional[str] = None, n_workers: int = 1,
                   recipe: Optional[str] = None) -> RunOutputs:
    """
    Run every sweep point and write ``<prefix>-results.csv``,
    ``<prefix>-manifest.json`` and, for placement runs,
    ``<prefix>-trajectory.csv``. Nothing is left behind on failure.
    """
    started = time.perf_counter()
    out_dir = Path(output_dir or config.output.directory or settings.OUTPUT_DIR)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = config.output.prefix
    points = config.expand_sweep()
    sweep_keys = list(config.sweep)
    logger.info(f"Experiment {config.experiment} ({recipe or 'config file'}): {len(points)} sweep points, "
                f"{n_workers} workers")

    outer = n_workers if len(points) > 1 else 1
    inner = 1 if outer > 1 else n_workers
    staging = Path(tempfile.mkdtemp(prefix=f".{prefix}-partial-", dir=out_dir))
    try:
        results = fan_out(_run_point, [(cfg, coords, inner) for coords, cfg in points], outer)
        rows = [row for res in results for row in res.rows]
        _write_csv(_results_frame(rows, sweep_keys), staging / "results.csv")

        trajectory = [entry for res in results for entry in res.trajectory]
        if trajectory:
            columns = [*sweep_keys, "restart", "iteration", "port", "x", "y"]
            if any("power" in e for e in trajectory):
                columns.append("power")
            _write_csv(pd.DataFrame.from_records(trajectory, columns=columns), staging / "trajectory.csv")

        manifest = {
            "recipe": recipe,
            "library_version": __version__,
            "python_version": platform.python_version(),
            "numpy_version": np.__version__,
            "n_workers": n_workers,
            "sweep_points": len(points),
            "wall_time_s": round(time.perf_counter() - started, 3),
            "config": config.model_dump(mode="json"),
        }
        (staging / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")

        final = {}
        for name in ("results.csv", "trajectory.csv", "manifest.json"):
            src = staging / name
            if src.exists():
                dest = out_dir / f"{prefix}-{name}"
                os.replace(src, dest)
                final[name] = dest
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    logger.info(f"Wrote {len(rows)} result rows to {final['results.csv']}")
    return RunOutputs(final["results.csv"], final["manifest.json"], final.get("trajectory.csv"), len(rows))
