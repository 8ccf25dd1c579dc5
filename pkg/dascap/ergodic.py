# dascap/ergodic.py
"""
Monte-Carlo cell-averaged ergodic rates, the nearest-port Jensen bound, edge
SNR calibration, area spectral efficiency, cell-size scaling and power gains.

Sampling is split in two: ``simulate_link_samples`` draws user positions,
shadowing and fading once and keeps only the per-port link gains, and
``rates_from_samples`` turns those gains into rates for any power
allocation. Re-evaluating the same samples at many powers is what makes the
minimum-power bisection an exact monotone search.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Union

import numpy as np

from .capacity import (CsiMode, PowerAllocation, Strategy, as_allocation, csir_snr, csit_snr,
                       single_port_snr)
from .channel import (ChannelParams, InterferenceParams, neighbor_interference_gains, path_loss,
                      shadowing_from_normals)
from .exceptions import ChannelError, GeometryError
from .geometry import ArrayLike, PortLayout, clamped_distance, nearest_port, quadrature_points, sample_points
from .utils.streams import MC_STREAM, block_generator, block_layout, fan_out

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 8192
DEFAULT_N_SAMPLES = 200_000


# ==============================================================================
# CONFIG AND ESTIMATES
# ==============================================================================
@dataclass(frozen=True)
class McConfig:
    n_samples: int = DEFAULT_N_SAMPLES
    seed: int = 0
    include_fading: bool = False
    include_shadowing: bool = True
    include_interference: bool = True
    antithetic: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class McEstimate:
    """Mean and normal-approximation standard error over ``n`` independent terms."""
    mean: float
    std_error: float
    n: int

    @classmethod
    def from_terms(cls, terms: np.ndarray) -> "McEstimate":
        terms = np.asarray(terms, dtype=float)
        n = terms.size
        # np.sum/np.std reduce pairwise, so the result only depends on term order.
        mean = float(np.mean(terms))
        std_error = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=mean, std_error=std_error, n=n)


@dataclass(frozen=True, eq=False)
class LinkSamples:
    """
    gains: ||h_n||^2 per term, draw and port, shape (n, k, N) with k = 2 for
    antithetic pairs; interference: sum_j gamma_j / L(r(p_n^j, u)) with the
    same shape, or None; nearest: nearest port per term.
    """
    gains: np.ndarray
    interference: Optional[np.ndarray]
    nearest: np.ndarray
    n_antennas: int
    sigma_n_sq: float

    @property
    def n_terms(self) -> int:
        return self.gains.shape[0]


# ==============================================================================
# SAMPLING
# ==============================================================================
def _simulate_block(layout: PortLayout, params: ChannelParams, intf: Optional[InterferenceParams],
                    mc: McConfig, n_antennas: int, block: int, size: int):
    rng = block_generator(mc.seed, block, MC_STREAM)
    N = layout.n_ports
    users = sample_points(layout.region, rng, size)
    z = rng.standard_normal((size, N))
    if mc.include_fading:
        f = rng.standard_normal((size, N, n_antennas, 2))
        fading_sq = 0.5 * np.sum(f ** 2, axis=(2, 3))
    else:
        fading_sq = np.full((size, N), float(n_antennas))

    sigma = params.sigma_sh_db if mc.include_shadowing else 0.0
    shadows = [shadowing_from_normals(z, sigma)]
    if mc.antithetic:
        shadows.append(shadowing_from_normals(-z, sigma))
    link = fading_sq / path_loss(clamped_distance(layout.ports[None, :, :], users[:, None, :], params.r0), params)
    gains = np.stack([g * link for g in shadows], axis=1)

    interference = None
    if intf is not None:
        base = neighbor_interference_gains(layout, users, intf, params)
        interference = np.repeat(base[:, None, :], len(shadows), axis=1)
    return gains, interference, nearest_port(layout.ports, users)


def simulate_link_samples(layout: PortLayout, params: ChannelParams, mc: McConfig,
                          intf: Optional[InterferenceParams] = None, n_antennas: int = 1,
                          n_workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> LinkSamples:
    use_intf = intf if (intf is not None and intf.active and mc.include_interference) else None
    n_terms = (mc.n_samples + 1) // 2 if mc.antithetic else mc.n_samples
    jobs = [(layout, params, use_intf, mc, n_antennas, block, size)
            for block, size in block_layout(n_terms, block_size)]
    parts = fan_out(_simulate_block, jobs, n_workers)
    gains = np.concatenate([p[0] for p in parts])
    interference = np.concatenate([p[1] for p in parts]) if use_intf is not None else None
    nearest = np.concatenate([p[2] for p in parts])
    return LinkSamples(gains, interference, nearest, n_antennas, params.sigma_n_sq)


def _noise_plus_interference(samples: LinkSamples, s: np.ndarray,
                             intf: Optional[InterferenceParams]) -> Union[float, np.ndarray]:
    if samples.interference is None:
        sigma_z_sq = samples.sigma_n_sq
        if not sigma_z_sq > 0:
            raise ChannelError("Noise power must be positive when interference is off")
        return sigma_z_sq
    neighbor = intf.neighbor_powers(s) if intf is not None else s
    sigma_z_sq = samples.sigma_n_sq + samples.interference @ neighbor
    if np.any(sigma_z_sq <= 0):
        # Only possible with zero noise and silent neighbors.
        raise ChannelError("Interference-plus-noise power vanished for some samples")
    return sigma_z_sq


def sample_rates(samples: LinkSamples, powers: Union[PowerAllocation, ArrayLike], mode: CsiMode,
                 strategy: Strategy, intf: Optional[InterferenceParams] = None) -> np.ndarray:
    """Per-draw rates, shape (n, k)."""
    N = samples.gains.shape[-1]
    s = as_allocation(powers, N).per_port
    sigma_z_sq = _noise_plus_interference(samples, s, intf)
    mode, strategy = CsiMode(mode), Strategy(strategy)
    if strategy is Strategy.SINGLE:
        idx = samples.nearest[:, None, None]
        g_m = np.take_along_axis(samples.gains, np.broadcast_to(idx, samples.gains.shape[:2] + (1,)), axis=-1)[..., 0]
        snr = single_port_snr(g_m, s[samples.nearest][:, None], sigma_z_sq, mode, samples.n_antennas)
    elif mode is CsiMode.CSIR:
        snr = csir_snr(samples.gains, s, sigma_z_sq, samples.n_antennas)
    else:
        snr = csit_snr(samples.gains, s, sigma_z_sq)
    return np.log2(1.0 + snr)


def rates_from_samples(samples: LinkSamples, powers: Union[PowerAllocation, ArrayLike], mode: CsiMode,
                       strategy: Strategy, intf: Optional[InterferenceParams] = None) -> np.ndarray:
    """One term per independent draw (antithetic pairs averaged)."""
    return sample_rates(samples, powers, mode, strategy, intf).mean(axis=1)


# ==============================================================================
# ESTIMATORS
# ==============================================================================
def cell_average_rate(layout: PortLayout, powers: Union[PowerAllocation, ArrayLike, float], mode: CsiMode,
                      strategy: Strategy, params: ChannelParams, intf: Optional[InterferenceParams],
                      mc: McConfig, n_antennas: int = 1, n_workers: int = 1) -> McEstimate:
    samples = simulate_link_samples(layout, params, mc, intf, n_antennas, n_workers)
    estimate = McEstimate.from_terms(rates_from_samples(samples, as_allocation(powers, layout.n_ports),
                                                        mode, strategy, intf))
    logger.debug(f"Cell average rate ({CsiMode(mode).value}/{Strategy(strategy).value}): "
                 f"{estimate.mean:.6f} +/- {estimate.std_error:.2e} over {estimate.n} terms")
    return estimate


def outage_probability(layout: PortLayout, powers: Union[PowerAllocation, ArrayLike, float], mode: CsiMode,
                       strategy: Strategy, params: ChannelParams, intf: Optional[InterferenceParams],
                       mc: McConfig, rate_threshold: float, n_antennas: int = 1,
                       n_workers: int = 1) -> McEstimate:
    """Probability over user position, shadowing and fading that the rate falls below the threshold."""
    samples = simulate_link_samples(layout, params, mc, intf, n_antennas, n_workers)
    rates = sample_rates(samples, as_allocation(powers, layout.n_ports), mode, strategy, intf)
    return McEstimate.from_terms((rates < rate_threshold).mean(axis=1))


def expected_nearest_path_loss(layout: PortLayout, params: ChannelParams, levels: int = 48) -> float:
    """E_u[beta * r_min^alpha] by the equal-area midpoint rule."""
    points, weights = quadrature_points(layout.region, levels)
    r = clamped_distance(layout.ports[None, :, :], points[:, None, :], params.r0).min(axis=1)
    return float(weights @ path_loss(r, params) / weights.sum())


def jensen_lower_bound(layout: PortLayout, power: float, params: ChannelParams, levels: int = 48) -> float:
    """log2(1 + S / (sigma_n^2 E_u[L(r_min)])); shadowing drops out of the bound."""
    if not params.sigma_n_sq > 0:
        raise ChannelError("The lower bound needs a positive noise power")
    return float(np.log2(1.0 + power / (params.sigma_n_sq * expected_nearest_path_loss(layout, params, levels))))


def calibrate_edge_power(radius: float, params: ChannelParams, target_snr_db: float) -> float:
    """Per-port power giving ``target_snr_db`` at distance ``radius`` from a single port."""
    if not math.isfinite(target_snr_db):
        raise ValueError("target_snr_db must be finite")
    if not params.sigma_n_sq > 0:
        raise ChannelError("Edge-SNR calibration needs a positive noise power sigma_n_sq")
    return 10.0 ** (target_snr_db / 10.0) * params.sigma_n_sq * params.beta * radius ** params.alpha


def area_spectral_efficiency(c_bar: float, radius: float, area_mode: str = "pi_r_sq") -> float:
    if radius <= 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    if area_mode == "pi_r_sq":
        return c_bar / (math.pi * radius ** 2)
    if area_mode == "hex_area":
        return c_bar / (1.5 * math.sqrt(3.0) * radius ** 2)
    raise ValueError(f"Unknown area_mode {area_mode!r}; expected 'pi_r_sq' or 'hex_area'")


# ==============================================================================
# CELL SCALING
# ==============================================================================
@dataclass(frozen=True, eq=False)
class CellInstance:
    layout: PortLayout
    powers: PowerAllocation
    params: ChannelParams
    intf: Optional[InterferenceParams] = None


def scaled_cell_instance(base: CellInstance, K: float) -> CellInstance:
    """Shrink every distance by K and every transmit power by K^2."""
    if K <= 0:
        raise ValueError(f"Scale factor must be positive, got {K}")
    if base.params.r0 > 0:
        raise ChannelError("Cell scaling is only equivalent with r0 = 0")
    region = base.layout.region.scaled(1.0 / K)
    layout = PortLayout(base.layout.ports / K, region)
    powers = PowerAllocation(base.powers.per_port / K ** 2,
                             None if base.powers.sum_cap is None else base.powers.sum_cap / K ** 2)
    intf = base.intf
    if intf is not None and intf.neighbor_power is not None:
        intf = replace(intf, neighbor_power=intf.neighbor_power / K ** 2)
    return CellInstance(layout, powers, base.params, intf)


def equivalent_noise_variance(params: ChannelParams, K: float) -> float:
    """Noise level that makes the original geometry equivalent to the K-times smaller cell."""
    return params.sigma_n_sq / K ** (params.alpha - 2.0)


def link_sinr(instance: CellInstance, u: ArrayLike) -> np.ndarray:
    """
    Deterministic per-port S_n / (L(r_n) (sigma_n^2 + I)) without shadowing
    or fading, where I is the neighbor-cell interference when enabled.
    """
    u = np.asarray(u, dtype=float)
    s = instance.powers.per_port
    signal = s / path_loss(clamped_distance(instance.layout.ports, u, instance.params.r0), instance.params)
    denom = instance.params.sigma_n_sq
    if instance.intf is not None and instance.intf.active:
        gains = neighbor_interference_gains(instance.layout, u, instance.intf, instance.params)[0]
        denom = denom + gains @ instance.intf.neighbor_powers(s)
    if not denom > 0:
        raise ChannelError("Noise plus interference power must be positive")
    return signal / denom


# ==============================================================================
# POWER GAIN
# ==============================================================================
@dataclass(frozen=True, eq=False)
class PowerCase:
    """One side of a power-gain comparison."""
    layout: PortLayout
    mode: CsiMode
    strategy: Strategy
    params: ChannelParams
    intf: Optional[InterferenceParams] = None
    n_antennas: int = 1


def power_gain(reference: PowerCase, optimized: PowerCase, target_rate: float, mc: McConfig,
               n_workers: int = 1) -> float:
    """10 log10(S_ref / S_opt) at a common target rate."""
    from .placement import min_power_for_target

    powers: List[float] = []
    for case in (reference, optimized):
        powers.append(min_power_for_target(case.layout, target_rate, case.mode, case.params, case.intf, mc,
                                           strategy=case.strategy, n_antennas=case.n_antennas,
                                           n_workers=n_workers))
    gain = 10.0 * math.log10(powers[0] / powers[1])
    logger.info(f"Power gain at C_t={target_rate:.4f}: {gain:.3f} dB "
                f"(S_ref={powers[0]:.6g}, S_opt={powers[1]:.6g})")
    return gain
