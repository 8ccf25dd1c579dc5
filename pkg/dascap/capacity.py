# dascap/capacity.py
"""
Per-realization capacities of DAS(N, L) under per-port power budgets, the
optimal transmit covariances for CSIR-only and full CSIT, and a brute-force
covariance search used to certify them numerically.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .channel import ChannelParams, ChannelRealization, path_loss
from .exceptions import ChannelError, CovarianceError
from .geometry import ArrayLike, PortLayout, clamped_distance, nearest_port

logger = logging.getLogger(__name__)

PSD_TOL = 1e-10
TRACE_TOL = 1e-12


class CsiMode(str, Enum):
    CSIR = "csir"
    CSIT = "csit"


class Strategy(str, Enum):
    ALL = "all"
    SINGLE = "single"


# ==============================================================================
# POWER AND COVARIANCE TYPES
# ==============================================================================
@dataclass(frozen=True, eq=False)
class PowerAllocation:
    per_port: np.ndarray
    sum_cap: Optional[float] = None

    def __post_init__(self):
        s = np.array(self.per_port, dtype=float).reshape(-1)
        if s.size < 1:
            raise ChannelError("A power allocation needs at least one port")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ChannelError("Per-port powers must be finite and >= 0")
        if self.sum_cap is not None and s.sum() > self.sum_cap * (1 + 1e-9):
            raise ChannelError(f"Total power {s.sum():.6g} exceeds the cap {self.sum_cap:.6g}")
        s.setflags(write=False)
        object.__setattr__(self, "per_port", s)

    @classmethod
    def uniform(cls, n_ports: int, power: float, capped: bool = False) -> "PowerAllocation":
        return cls(np.full(n_ports, float(power)), n_ports * float(power) if capped else None)

    @property
    def n_ports(self) -> int:
        return self.per_port.size

    @property
    def total(self) -> float:
        return float(self.per_port.sum())

    @property
    def mean(self) -> float:
        return float(self.per_port.mean())


def as_allocation(powers: Union[float, ArrayLike, PowerAllocation], n_ports: int) -> PowerAllocation:
    if isinstance(powers, PowerAllocation):
        if powers.n_ports != n_ports:
            raise ChannelError(f"Allocation has {powers.n_ports} ports, layout has {n_ports}")
        return powers
    return PowerAllocation(np.broadcast_to(np.asarray(powers, dtype=float), (n_ports,)))


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    entries: np.ndarray
    n_ports: int
    n_antennas: int
    inactive_ports: Tuple[int, ...] = ()

    def __post_init__(self):
        q = np.asarray(self.entries, dtype=complex)
        dim = self.n_ports * self.n_antennas
        if q.shape != (dim, dim):
            raise CovarianceError(f"Covariance must be {dim}x{dim}, got {q.shape}")
        object.__setattr__(self, "entries", q)

    def block(self, m: int, n: int) -> np.ndarray:
        L = self.n_antennas
        return self.entries[m * L:(m + 1) * L, n * L:(n + 1) * L]

    def block_traces(self) -> np.ndarray:
        d = np.real(np.diag(self.entries)).reshape(self.n_ports, self.n_antennas)
        return d.sum(axis=1)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))[0])

    def validate(self, powers: Optional[PowerAllocation] = None) -> None:
        """Raise CovarianceError unless Hermitian, PSD and (when given) within the per-port budgets."""
        q = self.entries
        scale = max(1.0, float(np.max(np.abs(q))) if q.size else 1.0)
        if np.max(np.abs(q - q.conj().T)) > PSD_TOL * scale:
            raise CovarianceError("Covariance is not Hermitian")
        lam = self.min_eigenvalue()
        if lam < -PSD_TOL * scale:
            raise CovarianceError(f"Covariance is not PSD (smallest eigenvalue {lam:.3e})")
        if powers is not None:
            traces = self.block_traces()
            budget = powers.per_port
            over = traces > budget + TRACE_TOL * np.maximum(1.0, budget)
            if np.any(over):
                raise CovarianceError(f"Per-port trace exceeds budget at ports {np.flatnonzero(over).tolist()}")


# ==============================================================================
# VECTORISED SNR KERNELS
# ==============================================================================
# norm_sq holds ||h_n||^2 along the last axis; sigma_z_sq broadcasts against the rest.
def csir_snr(norm_sq: np.ndarray, powers: np.ndarray, sigma_z_sq, n_antennas: int) -> np.ndarray:
    return np.sum(norm_sq * powers, axis=-1) / (n_antennas * np.asarray(sigma_z_sq))


def csit_snr(norm_sq: np.ndarray, powers: np.ndarray, sigma_z_sq) -> np.ndarray:
    return np.sum(np.sqrt(norm_sq * powers), axis=-1) ** 2 / np.asarray(sigma_z_sq)


def single_port_snr(norm_sq_m: np.ndarray, power_m: np.ndarray, sigma_z_sq, mode: CsiMode,
                    n_antennas: int) -> np.ndarray:
    """Nearest-port SNR; CSIR splits the port's power equally over its L antennas."""
    divisor = n_antennas if CsiMode(mode) is CsiMode.CSIR else 1
    return norm_sq_m * power_m / (divisor * np.asarray(sigma_z_sq))


def _norms_sq(h: Union[ChannelRealization, np.ndarray]) -> Tuple[np.ndarray, int]:
    if isinstance(h, ChannelRealization):
        return h.norms_sq, h.n_antennas
    blocks = np.atleast_2d(np.asarray(h))
    return np.sum(np.abs(blocks) ** 2, axis=1), blocks.shape[1]


def _check_noise(sigma_z_sq: float) -> None:
    if not sigma_z_sq > 0:
        raise ChannelError(f"sigma_z^2 must be positive, got {sigma_z_sq}")


# ==============================================================================
# CLOSED FORMS
# ==============================================================================
def capacity_csir(h: Union[ChannelRealization, np.ndarray], powers: Union[PowerAllocation, ArrayLike],
                  sigma_z_sq: float, n_antennas: Optional[int] = None) -> float:
    """log2(1 + (1/(L sigma_z^2)) sum_n ||h_n||^2 S_n)."""
    _check_noise(sigma_z_sq)
    norm_sq, L = _norms_sq(h)
    s = as_allocation(powers, norm_sq.size).per_port
    return float(np.log2(1.0 + csir_snr(norm_sq, s, sigma_z_sq, n_antennas or L)))


def capacity_csit(h: Union[ChannelRealization, np.ndarray], powers: Union[PowerAllocation, ArrayLike],
                  sigma_z_sq: float) -> float:
    """log2(1 + (sum_n ||h_n|| sqrt(S_n))^2 / sigma_z^2)."""
    _check_noise(sigma_z_sq)
    norm_sq, _ = _norms_sq(h)
    s = as_allocation(powers, norm_sq.size).per_port
    return float(np.log2(1.0 + csit_snr(norm_sq, s, sigma_z_sq)))


def q_star_csir(powers: Union[PowerAllocation, ArrayLike], n_ports: int, n_antennas: int) -> CovarianceMatrix:
    s = as_allocation(powers, n_ports).per_port
    return CovarianceMatrix(np.diag(np.repeat(s / n_antennas, n_antennas)).astype(complex), n_ports, n_antennas)


def beam_weights(h: Union[ChannelRealization, np.ndarray],
                 powers: Union[PowerAllocation, ArrayLike]) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """q_n = conj(h_n) / ||h_n|| * sqrt(S_n); ports with a zero channel get q_n = 0."""
    blocks = h.h if isinstance(h, ChannelRealization) else np.atleast_2d(np.asarray(h, dtype=complex))
    s = as_allocation(powers, blocks.shape[0]).per_port
    norms = np.linalg.norm(blocks, axis=1)
    inactive = tuple(int(i) for i in np.flatnonzero(norms == 0))
    safe = np.where(norms > 0, norms, 1.0)
    q = np.conj(blocks) / safe[:, None] * np.sqrt(s)[:, None]
    q[norms == 0] = 0.0
    return q.reshape(-1), inactive


def q_star_csit(h: Union[ChannelRealization, np.ndarray],
                powers: Union[PowerAllocation, ArrayLike]) -> CovarianceMatrix:
    """Rank-one beamforming covariance q q^H; block n has trace S_n."""
    blocks = h.h if isinstance(h, ChannelRealization) else np.atleast_2d(np.asarray(h, dtype=complex))
    q, inactive = beam_weights(blocks, powers)
    if inactive:
        logger.warning(f"Ports {list(inactive)} have a zero channel and get no beam power")
    return CovarianceMatrix(np.outer(q, np.conj(q)), blocks.shape[0], blocks.shape[1], inactive)


def snr_of_covariance(h: Union[ChannelRealization, np.ndarray], Q: CovarianceMatrix, sigma_z_sq: float) -> float:
    """h Q h^H / sigma_z^2."""
    _check_noise(sigma_z_sq)
    Q.validate()
    v = h.vector if isinstance(h, ChannelRealization) else np.asarray(h, dtype=complex).reshape(-1)
    if v.size != Q.entries.shape[0]:
        raise CovarianceError(f"Channel has {v.size} entries, covariance is {Q.entries.shape[0]}-dimensional")
    value = float(np.real(v @ Q.entries @ np.conj(v)))
    return max(value, 0.0) / sigma_z_sq


def rate_single_transmission(layout: PortLayout, u: ArrayLike, g: ArrayLike,
                             powers: Union[PowerAllocation, ArrayLike], params: ChannelParams,
                             sigma_z_sq: float, mode: CsiMode = CsiMode.CSIR,
                             f: Optional[np.ndarray] = None, n_antennas: int = 1) -> float:
    """
    Rate when only the nearest port (lowest index on ties) transmits.
    CSIT beamforms over that port's antennas; CSIR splits its power equally.
    """
    _check_noise(sigma_z_sq)
    u = np.asarray(u, dtype=float)
    m = int(nearest_port(layout.ports, u))
    s = as_allocation(powers, layout.n_ports).per_port
    g_m = float(np.asarray(g, dtype=float).reshape(-1)[m])
    fading_sq = float(n_antennas) if f is None else float(np.sum(np.abs(np.asarray(f)[m]) ** 2))
    L = n_antennas if f is None else np.asarray(f).shape[1]
    r = clamped_distance(layout.ports[m], u, params.r0)
    norm_sq = g_m * fading_sq / path_loss(r, params)
    return float(np.log2(1.0 + single_port_snr(norm_sq, s[m], sigma_z_sq, mode, L)))


# ==============================================================================
# BRUTE-FORCE COVARIANCE SEARCH
# ==============================================================================
@dataclass(frozen=True, eq=False)
class CovarianceSearchResult:
    covariance: CovarianceMatrix
    objective: float
    grid_step: float
    n_evaluated: int


def random_feasible_covariance(rng: np.random.Generator, powers: Union[PowerAllocation, ArrayLike],
                               n_ports: int, n_antennas: int, full_power: bool = False) -> CovarianceMatrix:
    """Random PSD covariance of random rank, rescaled block-wise to meet the per-port budgets."""
    s = as_allocation(powers, n_ports).per_port
    dim = n_ports * n_antennas
    rank = int(rng.integers(1, dim + 1))
    b = (rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))) / np.sqrt(2.0)
    m = b @ b.conj().T
    traces = np.real(np.diag(m)).reshape(n_ports, n_antennas).sum(axis=1)
    fill = np.ones(n_ports) if full_power else rng.random(n_ports)
    d = np.repeat(np.sqrt(fill * s / traces), n_antennas)
    return CovarianceMatrix(d[:, None] * m * d[None, :], n_ports, n_antennas)


def _mean_rate(snr: np.ndarray) -> np.ndarray:
    return np.mean(np.log2(1.0 + np.maximum(snr, 0.0)), axis=-1)


def _two_dim_params(x: np.ndarray, s: np.ndarray, n_ports: int):
    """Map normalised (power, split, |rho| fraction, arg rho / 2pi) to (t1, t2, rho)."""
    a, b, m, phi = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    if n_ports == 2:
        t1, t2 = a * s[0], b * s[1]
    else:
        total = a * s[0]
        t1, t2 = total * b, total * (1.0 - b)
    rho = m * np.sqrt(t1 * t2) * np.exp(2j * np.pi * phi)
    return t1, t2, rho


def _two_dim_objective(x: np.ndarray, stats: Tuple[np.ndarray, np.ndarray, np.ndarray],
                       s: np.ndarray, n_ports: int, sigma_z_sq: float, chunk: int = 64) -> np.ndarray:
    a, b, c = stats
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        t1, t2, rho = _two_dim_params(x[start:start + chunk], s, n_ports)
        snr = (t1[:, None] * a + t2[:, None] * b + 2.0 * np.real(rho[:, None] * c)) / sigma_z_sq
        out[start:start + chunk] = _mean_rate(snr)
    return out


def _search_two_dim(H: np.ndarray, s: np.ndarray, n_ports: int, n_antennas: int, sigma_z_sq: float,
                    grid_resolution: float) -> CovarianceSearchResult:
    stats = (np.abs(H[:, 0]) ** 2, np.abs(H[:, 1]) ** 2, H[:, 0] * np.conj(H[:, 1]))
    axes = [np.linspace(0, 1, 11), np.linspace(0, 1, 11), np.linspace(0, 1, 6), np.arange(12) / 12.0]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    values = _two_dim_objective(grid, stats, s, n_ports, sigma_z_sq)
    n_evaluated = grid.shape[0]
    best = grid[np.argmax(values)]
    best_value = float(values.max())

    step = np.array([0.1, 0.1, 0.2, 1.0 / 12.0])
    offsets = np.arange(-2, 3)
    while step.max() > grid_resolution / 4.0:
        step = step / 2.0
        local = [np.clip(best[k] + offsets * step[k], 0.0, 1.0) for k in range(3)]
        local.append(np.mod(best[3] + offsets * step[3], 1.0))
        cand = np.stack(np.meshgrid(*local, indexing="ij"), axis=-1).reshape(-1, 4)
        vals = _two_dim_objective(cand, stats, s, n_ports, sigma_z_sq)
        n_evaluated += cand.shape[0]
        if vals.max() > best_value:
            best_value = float(vals.max())
            best = cand[np.argmax(vals)]

    t1, t2, rho = _two_dim_params(best[None, :], s, n_ports)
    q = np.array([[t1[0], rho[0]], [np.conj(rho[0]), t2[0]]], dtype=complex)
    return CovarianceSearchResult(CovarianceMatrix(q, n_ports, n_antennas), best_value, float(step.max()),
                                  n_evaluated)


def _covariance_objective(H: np.ndarray, Qs: np.ndarray, sigma_z_sq: float) -> np.ndarray:
    snr = np.real(np.einsum("ki,cij,kj->ck", H, Qs, np.conj(H))) / sigma_z_sq
    return _mean_rate(snr)


def _search_random(H: np.ndarray, s: np.ndarray, n_ports: int, n_antennas: int, sigma_z_sq: float,
                   grid_resolution: float, rng: np.random.Generator, n_random: int,
                   chunk: int = 64) -> CovarianceSearchResult:
    def draw(count: int) -> np.ndarray:
        return np.stack([random_feasible_covariance(rng, s, n_ports, n_antennas).entries for _ in range(count)])

    best, best_value, n_evaluated = None, -np.inf, 0
    for start in range(0, n_random, chunk):
        Qs = draw(min(chunk, n_random - start))
        vals = _covariance_objective(H, Qs, sigma_z_sq)
        n_evaluated += Qs.shape[0]
        if vals.max() > best_value:
            best_value, best = float(vals.max()), Qs[np.argmax(vals)]

    # The feasible set is convex, so mixing the incumbent with fresh feasible
    # draws stays feasible; the mixing weight plays the role of a grid step.
    eps, rounds = 0.5, 0
    while eps > grid_resolution / 4.0 and rounds < 400:
        rounds += 1
        Qs = (1.0 - eps) * best[None] + eps * draw(chunk)
        vals = _covariance_objective(H, Qs, sigma_z_sq)
        n_evaluated += Qs.shape[0]
        if vals.max() > best_value:
            best_value, best = float(vals.max()), Qs[np.argmax(vals)]
        else:
            eps /= 2.0
    return CovarianceSearchResult(CovarianceMatrix(best, n_ports, n_antennas), best_value, eps, n_evaluated)


def brute_force_best_covariance(h_sampler: Callable[[np.random.Generator, int], np.ndarray],
                                powers: Union[PowerAllocation, ArrayLike], n_ports: int, n_antennas: int,
                                grid_resolution: float = 0.05, sigma_z_sq: float = 1.0,
                                n_samples: int = 10_000, seed: int = 0,
                                n_random: int = 4000) -> CovarianceSearchResult:
    """
    Maximise the sample average of log2(1 + h Q h^H / sigma_z^2) over feasible Q.

    ``h_sampler(rng, n)`` returns n channel vectors of length N*L; the same
    draws are reused for every candidate. NL = 2 uses a refined 4-D grid,
    NL in {3, 4} a random search with convex-mixing refinement.
    """
    dim = n_ports * n_antennas
    if dim > 4:
        raise CovarianceError(f"Brute-force search is limited to N*L <= 4, got {dim}")
    if not 0 < grid_resolution <= 0.5:
        raise CovarianceError(f"grid_resolution must lie in (0, 0.5], got {grid_resolution}")
    _check_noise(sigma_z_sq)
    s = as_allocation(powers, n_ports).per_port
    rng = np.random.default_rng(seed)
    H = np.asarray(h_sampler(rng, n_samples), dtype=complex).reshape(n_samples, dim)

    if dim == 1:
        q = CovarianceMatrix(np.array([[s[0]]], dtype=complex), 1, 1)
        value = float(_mean_rate(np.abs(H[:, 0]) ** 2 * s[0] / sigma_z_sq))
        result = CovarianceSearchResult(q, value, 0.0, 1)
    elif dim == 2:
        result = _search_two_dim(H, s, n_ports, n_antennas, sigma_z_sq, grid_resolution)
    else:
        result = _search_random(H, s, n_ports, n_antennas, sigma_z_sq, grid_resolution, rng, n_random)
    logger.info(f"Covariance search over N={n_ports}, L={n_antennas}: objective {result.objective:.6f} "
                f"after {result.n_evaluated} candidates, grid step {result.grid_step:.4g}")
    return result
