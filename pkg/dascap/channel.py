# dascap/channel.py
"""Path loss, shadowing, Rayleigh fading, channel vectors and interference-plus-noise power."""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .exceptions import ChannelError
from .geometry import ArrayLike, PortLayout, clamped_distance, neighbor_offsets

logger = logging.getLogger(__name__)

TYPICAL_ALPHA = (2.0, 6.0)


@dataclass(frozen=True)
class ChannelParams:
    alpha: float = 4.0
    beta: float = 1.0
    sigma_sh_db: float = 8.0
    r0: float = 1.0
    sigma_n_sq: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ChannelError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ChannelError(f"beta must be positive, got {self.beta}")
        if self.sigma_sh_db < 0:
            raise ChannelError(f"sigma_sh_db must be >= 0, got {self.sigma_sh_db}")
        if self.r0 < 0:
            raise ChannelError(f"r0 must be >= 0, got {self.r0}")
        # Zero noise is allowed so interference-limited (SIR) setups can be expressed.
        if self.sigma_n_sq < 0:
            raise ChannelError(f"sigma_n_sq must be >= 0, got {self.sigma_n_sq}")
        if self.sigma_n_sq == 0:
            logger.warning("sigma_n_sq = 0: rates stay finite only with active neighbor interference")
        lo, hi = TYPICAL_ALPHA
        if not lo <= self.alpha <= hi:
            logger.warning(f"Path-loss exponent {self.alpha} is outside the usual range [{lo}, {hi}]")


@dataclass(frozen=True)
class InterferenceParams:
    """
    gamma: one shared coefficient or six per-neighbor coefficients.
    neighbor_power: fixed common power of every neighbor port; ``None`` makes
    the neighbor cells mirror the central cell's own allocation.
    """
    gamma: Union[float, Tuple[float, ...]] = 0.0
    neighbor_power: Optional[float] = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if g.size not in (1, 6):
            raise ChannelError(f"gamma needs 1 or 6 values, got {g.size}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ChannelError("gamma coefficients must be finite and >= 0")
        if self.neighbor_power is not None and self.neighbor_power < 0:
            raise ChannelError(f"neighbor_power must be >= 0, got {self.neighbor_power}")
        object.__setattr__(self, "gamma", float(g[0]) if g.size == 1 else tuple(float(x) for x in g))

    @property
    def gammas(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.gamma, dtype=float), (6,)).copy()

    @property
    def active(self) -> bool:
        return bool(np.any(self.gammas > 0))

    def neighbor_powers(self, powers: np.ndarray) -> np.ndarray:
        """Per-port power transmitted by the replicated ports."""
        if self.neighbor_power is None:
            return np.asarray(powers, dtype=float)
        return np.full(np.shape(powers), float(self.neighbor_power))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    shadow_gains: np.ndarray
    fading: np.ndarray
    h: np.ndarray

    @property
    def n_ports(self) -> int:
        return self.h.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h.shape[1]

    @property
    def norms_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.h) ** 2, axis=1)

    @property
    def vector(self) -> np.ndarray:
        """The NL-vector h = [h_1, ..., h_N]."""
        return self.h.reshape(-1)


def path_loss(r: ArrayLike, params: ChannelParams) -> Union[float, np.ndarray]:
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0):
        raise ChannelError("Path loss is singular at r <= 0; clamp distances with r0 > 0")
    out = params.beta * arr ** params.alpha
    return float(out) if out.ndim == 0 else out


def draw_shadowing(rng: np.random.Generator, sigma_sh_db: float, n: Union[int, Tuple[int, ...]]) -> np.ndarray:
    """Log-normal gains 10^(X/10), X ~ N(0, sigma_sh_db^2). sigma 0 gives exact ones."""
    if sigma_sh_db < 0:
        raise ChannelError(f"sigma_sh_db must be >= 0, got {sigma_sh_db}")
    return shadowing_from_normals(rng.standard_normal(n), sigma_sh_db)


def shadowing_from_normals(z: np.ndarray, sigma_sh_db: float) -> np.ndarray:
    return 10.0 ** (sigma_sh_db * np.asarray(z) / 10.0)


def draw_fading(rng: np.random.Generator, n_ports: int, n_antennas: int,
                batch: Optional[int] = None) -> np.ndarray:
    """CN(0, 1) entries of shape (N, L), or (batch, N, L)."""
    if n_ports < 1 or n_antennas < 1:
        raise ChannelError("n_ports and n_antennas must be >= 1")
    shape = (n_ports, n_antennas) if batch is None else (batch, n_ports, n_antennas)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def channel_vector(layout: PortLayout, u: ArrayLike, g: ArrayLike, f: Optional[np.ndarray],
                   params: ChannelParams, n_antennas: int = 1) -> ChannelRealization:
    """h_n = sqrt(g_n / L(r(p_n, u))) f_n. ``f=None`` means fading disabled (all ones)."""
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.size != layout.n_ports:
        raise ChannelError(f"Expected {layout.n_ports} shadow gains, got {g.size}")
    if np.any(g <= 0):
        raise ChannelError("Shadow gains must be positive")
    if f is None:
        f = np.ones((layout.n_ports, n_antennas), dtype=complex)
    f = np.asarray(f, dtype=complex)
    if f.ndim != 2 or f.shape[0] != layout.n_ports:
        raise ChannelError(f"Fading must have shape ({layout.n_ports}, L), got {f.shape}")
    r = clamped_distance(layout.ports, np.asarray(u, dtype=float), params.r0)
    amplitude = np.sqrt(g / path_loss(r, params))
    return ChannelRealization(shadow_gains=g, fading=f, h=amplitude[:, None] * f)


def neighbor_interference_gains(layout: PortLayout, users: np.ndarray, intf: InterferenceParams,
                                params: ChannelParams) -> np.ndarray:
    """
    sum_j gamma_j / L(r(p_i + o^j, u)) for every user and port, shape (n_users, N).
    Multiply by the neighbor port powers and add sigma_n^2 to get sigma_z^2.
    """
    offsets = neighbor_offsets(layout.region)
    replicas = layout.ports[None, :, :] + offsets[:, None, :]
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    r = clamped_distance(replicas[None, ...], users[:, None, None, :], params.r0)
    return np.einsum("j,ujn->un", intf.gammas, 1.0 / path_loss(r, params))


def interference_noise_variance(layout: PortLayout, u: ArrayLike, intf: InterferenceParams,
                                params: ChannelParams, powers: Optional[ArrayLike] = None) -> float:
    """
    sigma_z^2 = sum_j sum_i gamma_j S / L(r(p_i^j, u)) + sigma_n^2.
    ``powers`` is the central allocation the neighbors mirror when
    ``intf.neighbor_power`` is unset.
    """
    if not intf.active:
        return params.sigma_n_sq
    if intf.neighbor_power is None and powers is None:
        raise ChannelError("Neighbor power is undefined: set neighbor_power or pass the central allocation")
    own = np.zeros(layout.n_ports) if powers is None else np.broadcast_to(
        np.asarray(powers, dtype=float), (layout.n_ports,))
    gains = neighbor_interference_gains(layout, np.asarray(u, dtype=float), intf, params)[0]
    return float(params.sigma_n_sq + gains @ intf.neighbor_powers(own))
