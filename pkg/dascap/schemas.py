import itertools
import math
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .capacity import CsiMode, Strategy
from .channel import ChannelParams, InterferenceParams
from .ergodic import McConfig
from .exceptions import GeometryError
from .geometry import PortLayout, Region, RegionKind, circular_layout

SweepValue = Union[int, float, str, bool]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ==============================================================================
# PHYSICAL SECTIONS
# ==============================================================================
class GeometryConfig(StrictModel):
    region: Literal["hexagon", "polygon"] = "hexagon"
    radius: float = Field(1000.0, gt=0)
    radius_convention: Literal["circumradius", "apothem"] = "circumradius"
    vertices: Optional[List[Tuple[float, float]]] = None
    r0: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _polygon_needs_vertices(self):
        if self.region == "polygon" and not self.vertices:
            raise ValueError("polygon regions need a vertex list")
        return self

    def build_region(self) -> Region:
        if self.region == "hexagon":
            return Region.hexagon(self.radius, self.radius_convention)
        region = Region.polygon(self.vertices)
        return Region(region.kind, region.vertices, self.radius)


class ChannelConfig(StrictModel):
    alpha: float = Field(4.0, gt=0)
    beta: float = Field(1.0, gt=0)
    sigma_sh_db: float = Field(8.0, ge=0)
    sigma_n_sq: float = Field(1.0, ge=0)

    def to_params(self, r0: float) -> ChannelParams:
        return ChannelParams(alpha=self.alpha, beta=self.beta, sigma_sh_db=self.sigma_sh_db, r0=r0,
                             sigma_n_sq=self.sigma_n_sq)


class LayoutConfig(StrictModel):
    kind: Literal["circular", "colocated", "random", "explicit", "lloyd"] = "circular"
    radius_fraction: float = Field(0.5, ge=0)
    center_port: bool = False
    phase_deg: float = 0.0
    points: Optional[List[Tuple[float, float]]] = None

    @model_validator(mode="after")
    def _explicit_needs_points(self):
        if self.kind == "explicit" and not self.points:
            raise ValueError("explicit layouts need a point list")
        return self


class SystemConfig(StrictModel):
    n_ports: int = Field(3, ge=1)
    n_antennas: int = Field(1, ge=1)
    csi_mode: CsiMode = CsiMode.CSIR
    strategy: Strategy = Strategy.ALL
    power: Optional[float] = Field(None, gt=0)
    edge_snr_db: float = 10.0

    @field_validator("edge_snr_db")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("edge_snr_db must be finite")
        return v


class InterferenceConfig(StrictModel):
    gamma: Union[float, List[float]] = 0.0
    neighbor_power: Optional[float] = Field(None, ge=0)

    @field_validator("gamma")
    @classmethod
    def _check_gamma(cls, v):
        values = v if isinstance(v, list) else [v]
        if isinstance(v, list) and len(v) != 6:
            raise ValueError("per-neighbor gamma needs exactly 6 values")
        if any(g < 0 for g in values):
            raise ValueError("gamma must be >= 0")
        return v

    def to_params(self) -> InterferenceParams:
        gamma = tuple(self.gamma) if isinstance(self.gamma, list) else self.gamma
        return InterferenceParams(gamma=gamma, neighbor_power=self.neighbor_power)


# ==============================================================================
# ALGORITHM SECTIONS
# ==============================================================================
class OptimizerConfig(StrictModel):
    schedule: Literal["a_over_t", "a_over_t_pow"] = "a_over_t"
    a: Optional[float] = Field(None, ge=0)
    step_scale: float = Field(0.05, gt=0)
    p: float = Field(1.0, gt=0.5, le=1.0)
    offset: float = Field(100.0, ge=0)
    n_iter: int = Field(200_000, ge=1)
    restarts: int = Field(5, ge=1)
    tol: float = Field(1e-4, gt=0)
    window: int = Field(5000, ge=1)
    snapshot_stride: int = Field(1000, ge=1)
    max_displacement_fraction: Optional[float] = Field(0.02, gt=0)
    include_fading: bool = False
    optimize_power: bool = False
    power_step_scale: float = Field(1.0, gt=0)
    lloyd_levels: int = Field(48, ge=4)
    lloyd_max_iter: int = Field(200, ge=1)
    target_rate: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _schedule_exponent(self):
        if self.schedule == "a_over_t" and self.p != 1.0:
            raise ValueError("a_over_t schedules have p = 1; use a_over_t_pow")
        return self


class McSettings(StrictModel):
    n_samples: int = Field(200_000, ge=1)
    seed: int = Field(..., ge=0, lt=2 ** 64)
    include_fading: bool = False
    include_shadowing: bool = True
    include_interference: bool = True
    antithetic: bool = False

    def to_config(self) -> McConfig:
        return McConfig(**self.model_dump())


class PowerGainConfig(StrictModel):
    reference_layout: Literal["colocated", "circular"] = "colocated"
    reference_mode: CsiMode = CsiMode.CSIR
    target_rate: Optional[float] = Field(None, gt=0)


class AseConfig(StrictModel):
    reference_radius: float = Field(1000.0, gt=0)
    random_layouts: int = Field(10, ge=1)
    area_mode: Literal["pi_r_sq", "hex_area"] = "pi_r_sq"


class OutputConfig(StrictModel):
    directory: Optional[str] = None
    prefix: str = Field("run", min_length=1)


# ==============================================================================
# EXPERIMENT
# ==============================================================================
EXPERIMENTS = ("capacity", "lloyd", "placement", "power_allocation", "power_gain", "ase")


class ExperimentConfig(StrictModel):
    experiment: Literal["capacity", "lloyd", "placement", "power_allocation", "power_gain", "ase"]
    description: Optional[str] = None
    geometry: GeometryConfig = GeometryConfig()
    channel: ChannelConfig = ChannelConfig()
    layout: LayoutConfig = LayoutConfig()
    system: SystemConfig = SystemConfig()
    interference: InterferenceConfig = InterferenceConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    mc: McSettings
    power_gain: PowerGainConfig = PowerGainConfig()
    ase: AseConfig = AseConfig()
    sweep: Dict[str, List[SweepValue]] = Field(default_factory=dict)
    output: OutputConfig = OutputConfig()

    @field_validator("sweep")
    @classmethod
    def _sweep_paths(cls, sweep: Dict[str, List[SweepValue]]):
        for key, values in sweep.items():
            parts = key.split(".")
            if len(parts) != 2 or parts[0] in ("sweep", "output", "mc", "experiment", "description"):
                raise ValueError(f"sweep key {key!r} must look like 'section.field' of a physical or algorithm section")
            section = cls.model_fields.get(parts[0])
            if section is None or parts[1] not in section.annotation.model_fields:
                raise ValueError(f"sweep key {key!r} does not name a configuration field")
            if not values:
                raise ValueError(f"sweep key {key!r} has no values")
        return sweep

    @model_validator(mode="after")
    def _check_domain(self):
        """Build the region and the fixed layout so invalid setups fail before any computation."""
        try:
            region = self.geometry.build_region()
        except GeometryError as exc:
            raise ValueError(f"geometry: {exc}")
        lay, N = self.layout, self.system.n_ports
        reference_circular = self.experiment == "power_gain" and self.power_gain.reference_layout == "circular"
        if lay.kind == "circular" or reference_circular:
            try:
                circular_layout(N, lay.radius_fraction * self.geometry.radius, region, lay.center_port,
                                math.radians(lay.phase_deg))
            except GeometryError as exc:
                raise ValueError(f"layout.radius_fraction: {exc}")
        if lay.kind == "explicit":
            if len(lay.points) != N:
                raise ValueError(f"layout.points: has {len(lay.points)} entries, system.n_ports is {N}")
            try:
                PortLayout(lay.points, region)
            except GeometryError as exc:
                raise ValueError(f"layout.points: {exc}")
        if (self.experiment == "lloyd" or lay.kind == "lloyd") and self.channel.alpha < 1:
            raise ValueError(f"channel.alpha: Lloyd placement needs alpha >= 1, got {self.channel.alpha}")
        gamma_active = self.interference.to_params().active
        intf_active = gamma_active and self.mc.include_interference
        if gamma_active and region.kind is not RegionKind.HEXAGON:
            raise ValueError("interference.gamma: neighbor interference is only defined for hexagonal regions")
        if self.channel.sigma_n_sq == 0:
            if not intf_active:
                raise ValueError("channel.sigma_n_sq: zero noise needs active interference (interference.gamma > 0)")
            if self.system.power is None:
                raise ValueError("channel.sigma_n_sq: edge-SNR calibration needs positive noise; set system.power")
        return self

    def expand_sweep(self) -> List[Tuple[Dict[str, SweepValue], "ExperimentConfig"]]:
        """Cartesian product of the sweep, each point validated as a full config."""
        if not self.sweep:
            return [({}, self)]
        keys = list(self.sweep)
        base = self.model_dump(mode="json", exclude={"sweep"})
        points = []
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            doc = {section: dict(body) if isinstance(body, dict) else body for section, body in base.items()}
            for key, value in zip(keys, combo):
                section, name = key.split(".")
                doc[section][name] = value
            points.append((dict(zip(keys, combo)), ExperimentConfig.model_validate(doc)))
        return points


class ResultRow(BaseModel):
    coords: Dict[str, Any]
    seed: int
    metric: str
    value: float
    std_error: Optional[float] = None
    units: str = ""
