# dascap/placement.py
"""
Port placement and power distribution.

Two placement optimisers live here: a Lloyd iteration that minimises the
expected path loss to the nearest port (the lower-bound criterion), and a
Robbins-Monro projected stochastic gradient that climbs the instantaneous
capacity directly, optionally with interference coupling and joint power
allocation. ``min_power_for_target`` solves the minimum-power problem by
bisection on the common per-port power.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize
from tqdm import tqdm

from .capacity import CsiMode, PowerAllocation, Strategy, as_allocation
from .channel import ChannelParams, InterferenceParams, path_loss, shadowing_from_normals
from .ergodic import McConfig, McEstimate, cell_average_rate, rates_from_samples, simulate_link_samples
from .exceptions import BracketError, GeometryError
from .geometry import (ArrayLike, PortLayout, Region, RegionKind, layout_radii, nearest_port,
                       neighbor_offsets, project_into_region, quadrature_points, sample_points)
from .utils.streams import RESTART_STREAM, block_generator, fan_out

logger = logging.getLogger(__name__)

DEFAULT_STEP_SCALE = 0.05
DEFAULT_STEP_OFFSET = 100.0
DEFAULT_WINDOW = 5000
DEFAULT_TOL = 1e-4
DRAW_CHUNK = 4096


# ==============================================================================
# STEP SCHEDULES AND TARGETS
# ==============================================================================
class ScheduleKind(str, Enum):
    A_OVER_T = "a_over_t"
    A_OVER_T_POW = "a_over_t_pow"


@dataclass(frozen=True)
class StepSchedule:
    """sigma^t = a / (offset + t)^p, with p = 1 for ``a_over_t``."""
    kind: ScheduleKind = ScheduleKind.A_OVER_T
    a: float = 1.0
    p: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.a < 0:
            raise ValueError(f"Step constant a must be >= 0, got {self.a}")
        if self.offset < 0:
            raise ValueError(f"Step offset must be >= 0, got {self.offset}")
        if self.kind is ScheduleKind.A_OVER_T and self.p != 1.0:
            raise ValueError("a_over_t schedules have p = 1; use a_over_t_pow for other exponents")
        if not 0.5 < self.p <= 1.0:
            raise ValueError(f"Step exponent p must lie in (0.5, 1], got {self.p}")

    def step(self, t: int) -> float:
        return self.a / (self.offset + t) ** self.p

    def steps(self, start: int, count: int) -> np.ndarray:
        return self.a / (self.offset + np.arange(start, start + count, dtype=float)) ** self.p

    def is_summable(self) -> bool:
        return self.p > 1.0

    def is_square_summable(self) -> bool:
        return 2.0 * self.p > 1.0

    @classmethod
    def scaled(cls, length: float, step_scale: float = DEFAULT_STEP_SCALE, offset: float = DEFAULT_STEP_OFFSET,
               p: float = 1.0) -> "StepSchedule":
        """Schedule with a = step_scale * length^2; the capacity gradient is in 1/length."""
        kind = ScheduleKind.A_OVER_T if p == 1.0 else ScheduleKind.A_OVER_T_POW
        return cls(kind=kind, a=step_scale * length ** 2, p=p, offset=offset)


class TargetKind(str, Enum):
    MAX_RATE_GIVEN_POWER = "max_rate_given_power"
    MIN_POWER_GIVEN_RATE = "min_power_given_rate"


@dataclass(frozen=True)
class OptimizeTarget:
    kind: TargetKind = TargetKind.MAX_RATE_GIVEN_POWER
    target_rate: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TargetKind(self.kind))
        if self.kind is TargetKind.MIN_POWER_GIVEN_RATE and not (self.target_rate or 0) > 0:
            raise ValueError("A min-power target needs a positive target rate")


# ==============================================================================
# RESULTS
# ==============================================================================
@dataclass(frozen=True, eq=False)
class PlacementRun:
    snapshots: np.ndarray
    snapshot_iterations: np.ndarray
    region: Region
    iterations: int
    converged: bool
    converged_at: Optional[int]
    window_displacement: float
    power_snapshots: Optional[np.ndarray] = None
    objective: Optional[McEstimate] = None

    @property
    def trajectory(self) -> List[PortLayout]:
        return [PortLayout(p, self.region) for p in self.snapshots]

    @property
    def final_layout(self) -> PortLayout:
        return PortLayout(self.snapshots[-1], self.region)

    @property
    def final_powers(self) -> Optional[PowerAllocation]:
        if self.power_snapshots is None:
            return None
        return PowerAllocation(self.power_snapshots[-1])


@dataclass(frozen=True, eq=False)
class LloydResult:
    layout: PortLayout
    objective: float
    history: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class RestartSummary:
    runs: list
    radii: np.ndarray

    @property
    def mean_radius(self) -> float:
        return float(self.radii.mean())

    @property
    def spread(self) -> float:
        """(max - min) / mean of the final mean port radius across restarts."""
        mean = self.radii.mean()
        return float((self.radii.max() - self.radii.min()) / mean) if mean > 0 else 0.0


# ==============================================================================
# LLOYD / LOWER-BOUND METHOD
# ==============================================================================
def _cell_objective(q: np.ndarray, pts: np.ndarray, w: np.ndarray, alpha: float,
                    r0: float = 0.0) -> Tuple[float, np.ndarray]:
    d = q - pts
    r = np.hypot(d[:, 0], d[:, 1])
    value = float(w @ np.maximum(r, r0) ** alpha)
    # flat inside the clamp, same as _nearest_objective
    outside = r > r0
    safe = np.where(outside, r, 1.0)
    coef = np.where(outside, alpha * safe ** (alpha - 2.0), 0.0) * w
    return value, coef @ d


def _nearest_objective(ports: np.ndarray, pts: np.ndarray, w: np.ndarray, alpha: float, r0: float) -> float:
    d = np.linalg.norm(pts[:, None, :] - ports[None, :, :], axis=2).min(axis=1)
    return float(w @ np.maximum(d, r0) ** alpha)


def lloyd_placement(n_ports: int, region: Region, alpha: float, init: Optional[PortLayout] = None,
                    tol: float = 1e-6, max_iter: int = 200, r0: float = 0.0, levels: int = 48,
                    rng: Optional[np.random.Generator] = None) -> LloydResult:
    """
    Alternate nearest-port assignment of quadrature points with relocation of
    every port to the alpha-power centroid of its cell. Lengths are handled in
    units of the region scale; ``tol`` is relative to it.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if n_ports < 1:
        raise ValueError("n_ports must be >= 1")
    scale = region.scale
    center = region.centroid
    pts, w = quadrature_points(region, levels)
    pts = (pts - center) / scale
    w = w / w.sum()
    r0n = r0 / scale

    if init is None:
        rng = rng if rng is not None else np.random.default_rng()
        ports = (sample_points(region, rng, n_ports) - center) / scale
    else:
        if init.n_ports != n_ports:
            raise ValueError(f"init has {init.n_ports} ports, expected {n_ports}")
        ports = (init.ports - center) / scale
    ports = ports.copy()

    history = [_nearest_objective(ports, pts, w, alpha, r0n)]
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        owner = nearest_port(ports, pts)
        moved = np.zeros(n_ports)
        for n in range(n_ports):
            mask = owner == n
            if not np.any(mask):
                continue
            cell_pts, cell_w = pts[mask], w[mask]
            start = ports[n].copy()
            start_value, _ = _cell_objective(start, cell_pts, cell_w, alpha, r0n)
            res = optimize.minimize(_cell_objective, start, args=(cell_pts, cell_w, alpha, r0n), jac=True,
                                    method="L-BFGS-B")
            cand = project_into_region(res.x * scale + center, region)
            cand = (cand - center) / scale
            cand_value, _ = _cell_objective(cand, cell_pts, cell_w, alpha, r0n)
            if cand_value <= start_value:
                ports[n] = cand
                moved[n] = np.linalg.norm(cand - start)
        history.append(_nearest_objective(ports, pts, w, alpha, r0n))
        if moved.max() < tol:
            converged = True
            break

    if not converged:
        logger.warning(f"Lloyd placement did not converge in {max_iter} iterations; returning best layout")
    layout = PortLayout(project_into_region(ports * scale + center, region), region)
    objective = history[-1] * scale ** alpha
    return LloydResult(layout, objective, np.asarray(history) * scale ** alpha, iteration, converged)


def _lloyd_restart(n_ports: int, region: Region, alpha: float, seed: int, restart: int, kwargs: dict) -> LloydResult:
    rng = block_generator(seed, restart, RESTART_STREAM)
    return lloyd_placement(n_ports, region, alpha, rng=rng, **kwargs)


def lloyd_multistart(n_ports: int, region: Region, alpha: float, restarts: int = 16, seed: int = 0,
                     n_workers: int = 1, **kwargs) -> Tuple[LloydResult, RestartSummary]:
    """Best of ``restarts`` randomly initialised Lloyd runs."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    runs = fan_out(_lloyd_restart, [(n_ports, region, alpha, seed, k, kwargs) for k in range(restarts)], n_workers)
    best = min(runs, key=lambda r: r.objective)
    radii = np.array([layout_radii(r.layout).mean() for r in runs])
    logger.info(f"Lloyd N={n_ports} alpha={alpha}: best objective {best.objective:.6g}, "
                f"mean port radius {layout_radii(best.layout).mean():.6g}")
    return best, RestartSummary(runs, radii)


# ==============================================================================
# INSTANTANEOUS CAPACITY AND GRADIENTS
# ==============================================================================
@dataclass
class _LinkState:
    c: np.ndarray            # g ||f||^2 / L(r) per port
    r: np.ndarray            # clamped distances
    dirs: np.ndarray         # (p_n - u) / D_n, zero inside the r0 ball
    interference: np.ndarray  # sum_j gamma_j / L(r_nj) per port
    d_interference: np.ndarray  # d interference_n / d p_n, shape (N, 2)
    nearest: int


def _unit_dirs(diff: np.ndarray, r0: float) -> np.ndarray:
    D = np.hypot(diff[..., 0], diff[..., 1])
    active = D > r0
    safe = np.where(D > 0, D, 1.0)
    return np.where(active[..., None], diff / safe[..., None], 0.0)


def _link_state(u: np.ndarray, ports: np.ndarray, region: Region, g: np.ndarray, fading_sq: np.ndarray,
                params: ChannelParams, intf: Optional[InterferenceParams]) -> _LinkState:
    diff = ports - u
    r = np.maximum(np.hypot(diff[:, 0], diff[:, 1]), params.r0)
    c = g * fading_sq / path_loss(r, params)
    N = ports.shape[0]
    interference = np.zeros(N)
    d_interference = np.zeros((N, 2))
    if intf is not None and intf.active:
        offsets = neighbor_offsets(region)
        rdiff = ports[None, :, :] + offsets[:, None, :] - u
        rr = np.maximum(np.hypot(rdiff[..., 0], rdiff[..., 1]), params.r0)
        gam = intf.gammas[:, None]
        interference = np.sum(gam / path_loss(rr, params), axis=0)
        dl = -params.alpha * gam / (params.beta * rr ** (params.alpha + 1.0))
        d_interference = np.sum(dl[..., None] * _unit_dirs(rdiff, params.r0), axis=0)
    return _LinkState(c, r, _unit_dirs(diff, params.r0), interference, d_interference,
                      int(nearest_port(ports, u)))


def _signal(state: _LinkState, s: np.ndarray, mode: CsiMode, strategy: Strategy, n_antennas: int):
    """Numerator of the SNR and its derivatives w.r.t. each port's position and power."""
    alpha_over_r = None
    N = s.size
    d_pos = np.zeros((N, 2))
    d_pow = np.zeros(N)
    if strategy is Strategy.SINGLE:
        m = state.nearest
        kappa = n_antennas if mode is CsiMode.CSIR else 1
        num = state.c[m] * s[m] / kappa
        d_pos[m] = -(s[m] / kappa) * state.c[m] / state.r[m] * state.dirs[m]
        d_pow[m] = state.c[m] / kappa
        return num, d_pos, d_pow
    alpha_over_r = 1.0 / state.r
    if mode is CsiMode.CSIR:
        num = float(np.sum(state.c * s)) / n_antennas
        d_pos = -(s * state.c * alpha_over_r / n_antennas)[:, None] * state.dirs
        d_pow = state.c / n_antennas
    else:
        amp = np.sqrt(state.c * s)
        B = float(amp.sum())
        num = B * B
        d_pos = -(B * amp * alpha_over_r)[:, None] * state.dirs
        tiny = 1e-12 * max(float(s.sum()), 1e-300)
        d_pow = B * np.sqrt(state.c / np.maximum(s, tiny))
    return num, d_pos, d_pow


def _capacity_and_gradients(u: np.ndarray, ports: np.ndarray, region: Region, g: np.ndarray,
                            fading_sq: np.ndarray, s: np.ndarray, mode: CsiMode, strategy: Strategy,
                            params: ChannelParams, intf: Optional[InterferenceParams], n_antennas: int):
    state = _link_state(u, ports, region, g, fading_sq, params, intf)
    num, d_num_pos, d_num_pow = _signal(state, s, mode, strategy, n_antennas)
    # The position derivative of every c_n carries a factor alpha, applied once here.
    d_num_pos = params.alpha * d_num_pos

    if intf is not None and intf.active:
        neighbor = intf.neighbor_powers(s)
        sigma_z_sq = params.sigma_n_sq + float(state.interference @ neighbor)
        d_sig_pos = neighbor[:, None] * state.d_interference
        d_sig_pow = state.interference if intf.neighbor_power is None else np.zeros_like(s)
    else:
        sigma_z_sq = params.sigma_n_sq
        d_sig_pos = np.zeros_like(d_num_pos)
        d_sig_pow = np.zeros_like(s)
    if not sigma_z_sq > 0:
        raise ValueError("Noise plus interference power must be positive")

    snr = num / sigma_z_sq
    denom = (sigma_z_sq + num) * math.log(2.0)
    grad_pos = (d_num_pos - snr * d_sig_pos) / denom
    grad_pow = (d_num_pow - snr * d_sig_pow) / denom
    return math.log2(1.0 + snr), grad_pos, grad_pow


def _fading_sq(f: Optional[np.ndarray], n_ports: int, n_antennas: int) -> np.ndarray:
    if f is None:
        return np.full(n_ports, float(n_antennas))
    return np.sum(np.abs(np.asarray(f)) ** 2, axis=1)


def instantaneous_capacity(u: ArrayLike, layout: PortLayout, g: ArrayLike,
                           powers: Union[PowerAllocation, ArrayLike], mode: CsiMode, params: ChannelParams,
                           intf: Optional[InterferenceParams] = None, f: Optional[np.ndarray] = None,
                           strategy: Strategy = Strategy.ALL, n_antennas: int = 1) -> float:
    """Capacity for one user position and shadowing draw, fading fixed to one unless given."""
    value, _, _ = _capacity_and_gradients(np.asarray(u, dtype=float), layout.ports, layout.region,
                                          np.asarray(g, dtype=float), _fading_sq(f, layout.n_ports, n_antennas),
                                          as_allocation(powers, layout.n_ports).per_port, CsiMode(mode),
                                          Strategy(strategy), params, intf, n_antennas)
    return value


def capacity_gradient(u: ArrayLike, layout: PortLayout, g: ArrayLike, powers: Union[PowerAllocation, ArrayLike],
                      mode: CsiMode, params: ChannelParams, intf: Optional[InterferenceParams] = None,
                      f: Optional[np.ndarray] = None, strategy: Strategy = Strategy.ALL,
                      n_antennas: int = 1) -> np.ndarray:
    """d C / d P as the 2N-vector [x_1, y_1, ..., x_N, y_N]."""
    _, grad_pos, _ = _capacity_and_gradients(np.asarray(u, dtype=float), layout.ports, layout.region,
                                             np.asarray(g, dtype=float), _fading_sq(f, layout.n_ports, n_antennas),
                                             as_allocation(powers, layout.n_ports).per_port, CsiMode(mode),
                                             Strategy(strategy), params, intf, n_antennas)
    return grad_pos.reshape(-1)


def capacity_power_gradient(u: ArrayLike, layout: PortLayout, g: ArrayLike,
                            powers: Union[PowerAllocation, ArrayLike], mode: CsiMode, params: ChannelParams,
                            intf: Optional[InterferenceParams] = None, f: Optional[np.ndarray] = None,
                            strategy: Strategy = Strategy.ALL, n_antennas: int = 1) -> np.ndarray:
    """d C / d S_n for every port."""
    _, _, grad_pow = _capacity_and_gradients(np.asarray(u, dtype=float), layout.ports, layout.region,
                                             np.asarray(g, dtype=float), _fading_sq(f, layout.n_ports, n_antennas),
                                             as_allocation(powers, layout.n_ports).per_port, CsiMode(mode),
                                             Strategy(strategy), params, intf, n_antennas)
    return grad_pow


def project_onto_simplex(v: ArrayLike, total: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = total} by sort and threshold."""
    v = np.asarray(v, dtype=float)
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    if v.size == 1:
        return np.array([float(total)])
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


# ==============================================================================
# ROBBINS-MONRO LOOP
# ==============================================================================
@dataclass(frozen=True, eq=False)
class PlacementDraws:
    """Pre-drawn per-iteration inputs: user positions, standard normal shadowing exponents, optional fading."""
    users: np.ndarray
    shadow_normals: np.ndarray
    fading: Optional[np.ndarray] = None

    @property
    def n_iter(self) -> int:
        return self.users.shape[0]


def draw_placement_inputs(region: Region, n_ports: int, n_iter: int, rng: np.random.Generator,
                          n_antennas: int = 1, include_fading: bool = False) -> PlacementDraws:
    users = sample_points(region, rng, n_iter)
    z = rng.standard_normal((n_iter, n_ports))
    fading = None
    if include_fading:
        fading = (rng.standard_normal((n_iter, n_ports, n_antennas))
                  + 1j * rng.standard_normal((n_iter, n_ports, n_antennas))) / np.sqrt(2.0)
    return PlacementDraws(users, z, fading)


def _draw_chunks(region: Region, n_ports: int, n_iter: int, rng: np.random.Generator, n_antennas: int,
                 include_fading: bool, draws: Optional[PlacementDraws]):
    if draws is not None:
        if draws.n_iter < n_iter:
            raise ValueError(f"Supplied draws cover {draws.n_iter} iterations, need {n_iter}")
        yield draws
        return
    done = 0
    while done < n_iter:
        size = min(DRAW_CHUNK, n_iter - done)
        yield draw_placement_inputs(region, n_ports, size, rng, n_antennas, include_fading)
        done += size


def _projected_sgd(init: PortLayout, powers: PowerAllocation, mode: CsiMode, params: ChannelParams,
                   intf: Optional[InterferenceParams], n_iter: int, rng: Optional[np.random.Generator], *,
                   position_schedule: Optional[StepSchedule], power_schedule: Optional[StepSchedule],
                   power_total: Optional[float], strategy: Strategy, n_antennas: int, include_fading: bool,
                   include_shadowing: bool, snapshot_stride: int, tol: float, window: int,
                   max_displacement: Optional[float], draws: Optional[PlacementDraws],
                   progress: bool, evaluate: Optional[McConfig]) -> PlacementRun:
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    if rng is None and draws is None:
        raise ValueError("Either rng or draws must be supplied")
    if params.r0 == 0 and position_schedule is not None:
        logger.warning("r0 = 0: the capacity gradient is unbounded near ports and convergence is not guaranteed")
    mode, strategy = CsiMode(mode), Strategy(strategy)
    region = init.region
    ports = init.ports.copy()
    s = powers.per_port.copy()
    N = ports.shape[0]
    sigma_sh = params.sigma_sh_db if include_shadowing else 0.0

    snaps, snap_iters = [ports.copy()], [0]
    power_snaps = [s.copy()] if power_schedule is not None else None
    displacement = np.zeros(n_iter)

    bar = tqdm(total=n_iter, desc="placement", disable=not progress)
    t = 0
    for chunk in _draw_chunks(region, N, n_iter, rng, n_antennas, include_fading, draws):
        count = min(chunk.n_iter, n_iter - t)
        gains = shadowing_from_normals(chunk.shadow_normals[:count], sigma_sh)
        pos_steps = position_schedule.steps(t + 1, count) if position_schedule is not None else None
        pow_steps = power_schedule.steps(t + 1, count) if power_schedule is not None else None
        for k in range(count):
            fading_sq = _fading_sq(None if chunk.fading is None else chunk.fading[k], N, n_antennas)
            _, grad_pos, grad_pow = _capacity_and_gradients(chunk.users[k], ports, region, gains[k], fading_sq,
                                                            s, mode, strategy, params, intf, n_antennas)
            if pos_steps is not None:
                delta = pos_steps[k] * grad_pos
                if max_displacement is not None:
                    norms = np.hypot(delta[:, 0], delta[:, 1])
                    over = norms > max_displacement
                    if np.any(over):
                        delta[over] *= (max_displacement / norms[over])[:, None]
                new_ports = project_into_region(ports + delta, region)
                displacement[t + k] = float(np.mean(np.hypot(*(new_ports - ports).T)))
                ports = new_ports
            if pow_steps is not None:
                s = project_onto_simplex(s + pow_steps[k] * grad_pow, power_total)
            step_no = t + k + 1
            if step_no % snapshot_stride == 0 or step_no == n_iter:
                snaps.append(ports.copy())
                snap_iters.append(step_no)
                if power_snaps is not None:
                    power_snaps.append(s.copy())
        t += count
        bar.update(count)
        if t >= n_iter:
            break
    bar.close()

    scale_len = region.scale
    w = min(window, n_iter)
    csum = np.concatenate([[0.0], np.cumsum(displacement)])
    window_means = (csum[w:] - csum[:-w]) / w
    below = np.flatnonzero(window_means < tol * scale_len)
    converged_at = int(below[0] + w) if below.size else None
    final_mean = float(window_means[-1])
    converged = final_mean < tol * scale_len
    if not converged:
        logger.warning(f"Placement not converged after {n_iter} iterations: windowed mean displacement "
                       f"{final_mean:.3e} vs tolerance {tol * scale_len:.3e}")

    final_layout = PortLayout(ports, region)
    objective = None
    if evaluate is not None:
        objective = cell_average_rate(final_layout, PowerAllocation(s), mode, strategy, params, intf, evaluate,
                                      n_antennas=n_antennas)
    return PlacementRun(
        snapshots=np.stack(snaps),
        snapshot_iterations=np.asarray(snap_iters),
        region=region,
        iterations=n_iter,
        converged=converged,
        converged_at=converged_at,
        window_displacement=final_mean,
        power_snapshots=None if power_snaps is None else np.stack(power_snaps),
        objective=objective,
    )


def stochastic_update_placement(init: PortLayout, powers: Union[PowerAllocation, ArrayLike, float], mode: CsiMode,
                                schedule: StepSchedule, params: ChannelParams,
                                intf: Optional[InterferenceParams], n_iter: int,
                                rng: Optional[np.random.Generator], *, strategy: Strategy = Strategy.ALL,
                                n_antennas: int = 1, include_fading: bool = False, include_shadowing: bool = True,
                                snapshot_stride: int = 100, tol: float = DEFAULT_TOL, window: int = DEFAULT_WINDOW,
                                max_displacement: Optional[float] = None, draws: Optional[PlacementDraws] = None,
                                progress: bool = False, evaluate: Optional[McConfig] = None) -> PlacementRun:
    """
    Robbins-Monro placement: every iteration draws a shadowing vector and a
    user position and moves the ports along the capacity gradient, projected
    back into the region.
    """
    return _projected_sgd(init, as_allocation(powers, init.n_ports), mode, params, intf, n_iter, rng,
                          position_schedule=schedule, power_schedule=None, power_total=None, strategy=strategy,
                          n_antennas=n_antennas, include_fading=include_fading,
                          include_shadowing=include_shadowing, snapshot_stride=snapshot_stride, tol=tol,
                          window=window, max_displacement=max_displacement, draws=draws, progress=progress,
                          evaluate=evaluate)


def interference_aware_placement(init: PortLayout, powers: Union[PowerAllocation, ArrayLike, float],
                                 mode: CsiMode, schedule: StepSchedule, params: ChannelParams,
                                 gamma: Union[float, Sequence[float]], n_iter: int,
                                 rng: Optional[np.random.Generator], *, neighbor_power: Optional[float] = None,
                                 **kwargs) -> PlacementRun:
    """Placement whose gradient also follows every port's six neighbor-cell replicas."""
    if init.region.kind is not RegionKind.HEXAGON:
        raise GeometryError("Interference-aware placement needs a hexagonal cell")
    intf = InterferenceParams(gamma=gamma if np.isscalar(gamma) else tuple(gamma), neighbor_power=neighbor_power)
    return stochastic_update_placement(init, powers, mode, schedule, params, intf, n_iter, rng, **kwargs)


def optimize_power_allocation(layout: PortLayout, total: float, mode: CsiMode, params: ChannelParams,
                              intf: Optional[InterferenceParams], schedule: StepSchedule, n_iter: int,
                              rng: Optional[np.random.Generator], *, joint: bool = False,
                              position_schedule: Optional[StepSchedule] = None,
                              init_powers: Optional[ArrayLike] = None, strategy: Strategy = Strategy.ALL,
                              n_antennas: int = 1, include_fading: bool = False, include_shadowing: bool = True,
                              snapshot_stride: int = 100, tol: float = DEFAULT_TOL, window: int = DEFAULT_WINDOW,
                              max_displacement: Optional[float] = None, draws: Optional[PlacementDraws] = None,
                              progress: bool = False, evaluate: Optional[McConfig] = None) -> PlacementRun:
    """
    Projected stochastic gradient on the per-port powers under sum_n S_n = total.
    With ``joint`` the port positions move too, interleaved step by step.
    """
    if total <= 0:
        raise ValueError(f"total power must be positive, got {total}")
    if joint and position_schedule is None:
        raise ValueError("Joint optimisation needs a position schedule")
    N = layout.n_ports
    start = np.full(N, total / N) if init_powers is None else project_onto_simplex(init_powers, total)
    run = _projected_sgd(layout, PowerAllocation(start), mode, params, intf, n_iter, rng,
                         position_schedule=position_schedule if joint else None, power_schedule=schedule,
                         power_total=total, strategy=strategy, n_antennas=n_antennas,
                         include_fading=include_fading, include_shadowing=include_shadowing,
                         snapshot_stride=snapshot_stride, tol=tol, window=window,
                         max_displacement=max_displacement, draws=draws, progress=progress, evaluate=evaluate)
    logger.info(f"Power allocation finished: {np.array2string(run.power_snapshots[-1] / (total / N), precision=3)}"
                f" x (total/N)")
    return run


def power_ratios(layout: PortLayout, powers: PowerAllocation) -> Tuple[float, float]:
    """(central / mean peripheral, central / total) with the central port being the one nearest the centroid."""
    radii = layout_radii(layout)
    central = int(np.argmin(radii))
    s = powers.per_port
    peripheral = np.delete(s, central)
    ratio_peripheral = float(s[central] / peripheral.mean()) if peripheral.size and peripheral.mean() > 0 else math.inf
    return ratio_peripheral, float(s[central] / s.sum())


# ==============================================================================
# RESTARTS
# ==============================================================================
def _placement_restart(factory: Callable[[np.random.Generator], PlacementRun], seed: int, restart: int) -> PlacementRun:
    return factory(block_generator(seed, restart, RESTART_STREAM))


def run_restarts(factory: Callable[[np.random.Generator], PlacementRun], restarts: int, seed: int,
                 n_workers: int = 1) -> RestartSummary:
    """
    Run ``factory(rng)`` once per restart with independent streams; the
    factory draws its own initial layout. It must be picklable for n_workers > 1.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    runs = fan_out(_placement_restart, [(factory, seed, k) for k in range(restarts)], n_workers)
    radii = np.array([layout_radii(r.final_layout).mean() for r in runs])
    summary = RestartSummary(runs, radii)
    logger.info(f"{restarts} restarts: mean port radius {summary.mean_radius:.4g}, spread {summary.spread:.2%}")
    return summary


# ==============================================================================
# MINIMUM POWER FOR A TARGET RATE
# ==============================================================================
def min_power_for_target(layout: PortLayout, target_rate: float, mode: CsiMode, params: ChannelParams,
                         intf: Optional[InterferenceParams], mc: McConfig, *, strategy: Strategy = Strategy.ALL,
                         n_antennas: int = 1, bounds: Optional[Tuple[float, float]] = None, rtol: float = 1e-6,
                         n_workers: int = 1) -> float:
    """
    Smallest common per-port power whose cell-average rate reaches
    ``target_rate``. The Monte-Carlo draws are fixed once, so the rate is a
    deterministic non-decreasing function of S and bisection in log S is exact.
    Neighbor ports mirror S unless ``intf.neighbor_power`` is set.
    """
    if not target_rate > 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if bounds is None:
        if not params.sigma_n_sq > 0:
            raise ValueError("Default power bounds need a positive noise power; pass bounds explicitly")
        reference = params.sigma_n_sq * params.beta * layout.region.scale ** params.alpha
        bounds = (reference * 1e-12, reference * 1e12)
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValueError(f"Invalid power bounds {bounds}")

    samples = simulate_link_samples(layout, params, mc, intf, n_antennas, n_workers)
    N = layout.n_ports

    def rate(log_s: float) -> float:
        return float(rates_from_samples(samples, np.full(N, math.exp(log_s)), mode, strategy, intf).mean())

    log_lo, log_hi = math.log(lo), math.log(hi)
    top = rate(log_hi)
    if top < target_rate:
        raise BracketError(f"Target rate {target_rate:.6g} is unattainable within S <= {hi:.6g} "
                           f"(rate there is {top:.6g})", lo, hi)
    if rate(log_lo) >= target_rate:
        logger.info(f"Target rate {target_rate:.6g} already met at the lower bound S={lo:.6g}")
        return lo

    grid = np.linspace(log_lo, log_hi, 25)
    values = np.array([rate(x) for x in grid])
    if np.any(np.diff(values) < -1e-12 * np.maximum(1.0, np.abs(values[1:]))):
        raise BracketError("Cell-average rate is not monotone in S on the bracket", lo, hi)
    k = int(np.flatnonzero(values >= target_rate)[0])
    a, b = grid[k - 1], grid[k]
    logger.info(f"Bisection bracket for C_t={target_rate:.6g}: S in [{math.exp(a):.6g}, {math.exp(b):.6g}]")
    root = optimize.bisect(lambda x: rate(x) - target_rate, a, b, xtol=rtol / 4.0, maxiter=200)
    return math.exp(root)
