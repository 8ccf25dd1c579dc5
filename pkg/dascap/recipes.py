# dascap/recipes.py
"""
Built-in reproductions. Names are stable identifiers: scripts and notes may
refer to them, so rename only together with a changelog entry.

Recipes that report radius_over_R measure the hexagon by its
apothem (``radius_convention: apothem``).
"""
import copy
from dataclasses import dataclass
from typing import Any, Dict, List

from .exceptions import ConfigError
from .schemas import ExperimentConfig

ALPHAS = [2.0, 3.0, 4.0, 5.0, 6.0]
GAMMAS = [0.0, 0.25, 0.5, 0.75, 1.0]
RADIUS_GRID = [round(0.25 + 0.01 * k, 2) for k in range(26)]

_APOTHEM_HEXAGON = {"region": "hexagon", "radius": 1000.0, "radius_convention": "apothem", "r0": 1.0}


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    document: Dict[str, Any]

    def config(self) -> ExperimentConfig:
        doc = copy.deepcopy(self.document)
        doc.setdefault("output", {}).setdefault("prefix", self.name)
        doc.setdefault("description", self.description)
        return ExperimentConfig.model_validate(doc)


_RECIPES: List[Recipe] = [
    Recipe(
        "example1-lowerbound",
        "Lower-bound (Lloyd) placement of 3 ports in a hexagon, optimal radius/R for alpha 2..6",
        {
            "experiment": "lloyd",
            "geometry": {**_APOTHEM_HEXAGON, "r0": 0.0},
            "channel": {"alpha": 4.0, "sigma_sh_db": 8.0},
            "system": {"n_ports": 3},
            "optimizer": {"restarts": 16, "lloyd_levels": 48, "lloyd_max_iter": 300, "tol": 1e-7},
            "mc": {"n_samples": 20_000, "seed": 20150101},
            "sweep": {"channel.alpha": ALPHAS},
        },
    ),
    Recipe(
        "fig-trajectory-a6",
        "Stochastic update of 3 ports, alpha 6, 8 dB shadowing, 200k iterations, port trajectories",
        {
            "experiment": "placement",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 6.0, "sigma_sh_db": 8.0},
            "layout": {"kind": "random"},
            "system": {"n_ports": 3, "edge_snr_db": 10.0},
            "optimizer": {"n_iter": 200_000, "restarts": 5, "snapshot_stride": 1000},
            "mc": {"n_samples": 50_000, "seed": 61},
        },
    ),
    Recipe(
        "radius-vs-alpha",
        "Stochastic-update optimal radius of 3 ports versus alpha for CSIR and CSIT",
        {
            "experiment": "placement",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"sigma_sh_db": 8.0},
            "layout": {"kind": "random"},
            "system": {"n_ports": 3, "edge_snr_db": 10.0},
            "optimizer": {"n_iter": 100_000, "restarts": 3, "snapshot_stride": 2000},
            "mc": {"n_samples": 50_000, "seed": 62},
            "sweep": {"channel.alpha": ALPHAS, "system.csi_mode": ["csir", "csit"]},
        },
    ),
    Recipe(
        "rate-vs-radius",
        "Cell-average CSIT rate of a 3-port circular layout over its radius and orientation (alpha 2, no shadowing)",
        {
            "experiment": "capacity",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 2.0, "sigma_sh_db": 0.0},
            "layout": {"kind": "circular"},
            "system": {"n_ports": 3, "csi_mode": "csit", "edge_snr_db": 10.0},
            "mc": {"n_samples": 200_000, "seed": 63, "include_shadowing": False},
            "sweep": {"layout.radius_fraction": RADIUS_GRID, "layout.phase_deg": [0.0, 30.0]},
        },
    ),
    Recipe(
        "csit-radius-a2",
        "Stochastic-update radius of 3 ports, CSIT, alpha 2, no shadowing; compare with rate-vs-radius",
        {
            "experiment": "placement",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 2.0, "sigma_sh_db": 0.0},
            "layout": {"kind": "random"},
            "system": {"n_ports": 3, "csi_mode": "csit", "edge_snr_db": 10.0},
            "optimizer": {"n_iter": 200_000, "restarts": 3, "snapshot_stride": 2000},
            "mc": {"n_samples": 200_000, "seed": 63, "include_shadowing": False},
        },
    ),
    Recipe(
        "power-gain",
        "Power gain of 6 Lloyd-placed ports over 6 colocated antennas (CSIR) versus alpha",
        {
            "experiment": "power_gain",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"sigma_sh_db": 8.0},
            "layout": {"kind": "lloyd"},
            "system": {"n_ports": 6, "edge_snr_db": 10.0},
            "optimizer": {"restarts": 8},
            "power_gain": {"reference_layout": "colocated", "reference_mode": "csir"},
            "mc": {"n_samples": 100_000, "seed": 64},
            "sweep": {"channel.alpha": ALPHAS},
        },
    ),
    Recipe(
        "coherent-gain",
        "Colocated 6 antennas, CSIT against CSIR without shadowing or fading (coherent combining gain)",
        {
            "experiment": "power_gain",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 4.0, "sigma_sh_db": 0.0},
            "layout": {"kind": "colocated"},
            "system": {"n_ports": 6, "csi_mode": "csit", "edge_snr_db": 10.0},
            "power_gain": {"reference_layout": "colocated", "reference_mode": "csir"},
            "mc": {"n_samples": 50_000, "seed": 65, "include_shadowing": False},
        },
    ),
    Recipe(
        "noncircular-layouts",
        "Stochastic-update layouts for 6 and 12 ports at alpha 5",
        {
            "experiment": "placement",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 5.0, "sigma_sh_db": 8.0},
            "layout": {"kind": "random"},
            "system": {"edge_snr_db": 10.0},
            "optimizer": {"n_iter": 100_000, "restarts": 3, "snapshot_stride": 2000},
            "mc": {"n_samples": 50_000, "seed": 66},
            "sweep": {"system.n_ports": [6, 12]},
        },
    ),
    Recipe(
        "interference-shrinkage",
        "Interference-aware placement of 7 ports (1 + 6) over gamma at alpha 4",
        {
            "experiment": "placement",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 4.0, "sigma_sh_db": 8.0},
            "layout": {"kind": "circular", "center_port": True, "radius_fraction": 0.6},
            "system": {"n_ports": 7, "edge_snr_db": 10.0},
            "optimizer": {"n_iter": 100_000, "restarts": 3, "snapshot_stride": 2000},
            "mc": {"n_samples": 50_000, "seed": 67},
            "sweep": {"interference.gamma": GAMMAS},
        },
    ),
    Recipe(
        "interference-power-split",
        "Power distribution over a fixed 1 + 6 layout versus gamma (central and peripheral ratios)",
        {
            "experiment": "power_allocation",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 4.0, "sigma_sh_db": 8.0},
            "layout": {"kind": "circular", "center_port": True, "radius_fraction": 0.6},
            "system": {"n_ports": 7, "edge_snr_db": 10.0},
            "optimizer": {"n_iter": 50_000, "restarts": 2, "snapshot_stride": 1000},
            "mc": {"n_samples": 50_000, "seed": 68},
            "sweep": {"interference.gamma": GAMMAS},
        },
    ),
    Recipe(
        "interference-table",
        "Cell-average rates of a 1 + 6 layout at r = R/2 over gamma, CSIR and CSIT",
        {
            "experiment": "capacity",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 4.0, "sigma_sh_db": 8.0},
            "layout": {"kind": "circular", "center_port": True, "radius_fraction": 0.5},
            "system": {"n_ports": 7, "edge_snr_db": 10.0},
            "mc": {"n_samples": 100_000, "seed": 69},
            "sweep": {"interference.gamma": GAMMAS, "system.csi_mode": ["csir", "csit"]},
        },
    ),
    Recipe(
        "ase-curve",
        "Area spectral efficiency versus cell radius, optimal against random placement (alpha 3, gamma 0.5)",
        {
            "experiment": "ase",
            "geometry": _APOTHEM_HEXAGON,
            "channel": {"alpha": 3.0, "sigma_sh_db": 8.0},
            "layout": {"kind": "circular", "radius_fraction": 0.57, "phase_deg": 30.0},
            "system": {"n_ports": 3, "edge_snr_db": 10.0},
            "interference": {"gamma": 0.5},
            "ase": {"reference_radius": 1000.0, "random_layouts": 10},
            "mc": {"n_samples": 50_000, "seed": 70},
            "sweep": {"geometry.radius": [100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0]},
        },
    ),
]

RECIPES: Dict[str, Recipe] = {r.name: r for r in _RECIPES}


def list_recipes() -> List[Recipe]:
    return list(_RECIPES)


def get_recipe(name: str) -> Recipe:
    try:
        return RECIPES[name]
    except KeyError:
        raise ConfigError(f"Unknown recipe {name!r}; known recipes: {', '.join(RECIPES)}")
