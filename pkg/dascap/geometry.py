# dascap/geometry.py
"""
Cell regions, port layouts and the first-tier hexagonal neighbor grid.

Hexagons are flat-top with a vertex on the +x axis. ``Region.hexagon`` takes
the nominal radius together with the convention it is measured in; the
vertices always sit at the circumradius.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import GeometryError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]

CONTAINS_TOL = 1e-9


class RegionKind(str, Enum):
    HEXAGON = "hexagon"
    POLYGON = "polygon"


class RadiusConvention(str, Enum):
    CIRCUMRADIUS = "circumradius"
    APOTHEM = "apothem"


# ==============================================================================
# REGIONS
# ==============================================================================
@dataclass(frozen=True, eq=False)
class Region:
    kind: RegionKind
    vertices: np.ndarray
    radius: Optional[float] = None
    convention: RadiusConvention = RadiusConvention.CIRCUMRADIUS

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError(f"Region needs at least 3 vertices of shape (V, 2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("Region vertices must be finite")
        if _signed_area(v) <= 0:
            raise GeometryError("Region vertices must be counter-clockwise with positive area")
        edges = np.roll(v, -1, axis=0) - v
        turns = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        scale = float(np.max(np.abs(v))) ** 2
        if np.any(turns < -1e-12 * scale):
            raise GeometryError("Region must be convex")
        if self.radius is not None and self.radius <= 0:
            raise GeometryError(f"Region radius must be positive, got {self.radius}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "kind", RegionKind(self.kind))
        object.__setattr__(self, "convention", RadiusConvention(self.convention))

    @classmethod
    def hexagon(cls, radius: float, convention: Union[str, RadiusConvention] = RadiusConvention.CIRCUMRADIUS,
                center: ArrayLike = (0.0, 0.0)) -> "Region":
        if radius <= 0:
            raise GeometryError(f"Hexagon radius must be positive, got {radius}")
        convention = RadiusConvention(convention)
        circumradius = radius if convention is RadiusConvention.CIRCUMRADIUS else radius * 2.0 / math.sqrt(3.0)
        angles = np.arange(6) * math.pi / 3.0
        vertices = circumradius * np.column_stack([np.cos(angles), np.sin(angles)])
        return cls(RegionKind.HEXAGON, vertices + np.asarray(center, dtype=float), radius, convention)

    @classmethod
    def polygon(cls, vertices: ArrayLike) -> "Region":
        return cls(RegionKind.POLYGON, np.asarray(vertices, dtype=float))

    @classmethod
    def regular_polygon(cls, n_sides: int, circumradius: float) -> "Region":
        """Regular polygon with a vertex on the +x axis; a fine stand-in for a disk."""
        if n_sides < 3:
            raise GeometryError("A polygon needs at least 3 sides")
        angles = np.arange(n_sides) * 2.0 * math.pi / n_sides
        return cls(RegionKind.POLYGON, circumradius * np.column_stack([np.cos(angles), np.sin(angles)]),
                   radius=circumradius)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return np.array([np.sum((v[:, 0] + w[:, 0]) * cross),
                         np.sum((v[:, 1] + w[:, 1]) * cross)]) / (6.0 * self.area)

    @property
    def circumradius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices - self.centroid, axis=1)))

    @property
    def apothem(self) -> float:
        """Distance from the centroid to the closest edge line."""
        normals, offsets = self._edge_lines()
        return float(np.min(offsets - normals @ self.centroid))

    @property
    def scale(self) -> float:
        """Nominal length scale: the configured radius, else the circumradius."""
        return float(self.radius) if self.radius is not None else self.circumradius

    @property
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, points: ArrayLike, tol: float = CONTAINS_TOL) -> np.ndarray:
        """Vectorised point-in-convex-polygon test; ``tol`` is relative to the region scale."""
        pts = np.asarray(points, dtype=float)
        normals, offsets = self._edge_lines()
        slack = pts @ normals.T - offsets
        return np.all(slack <= tol * self.circumradius, axis=-1)

    def translated(self, offset: ArrayLike) -> "Region":
        return Region(self.kind, self.vertices + np.asarray(offset, dtype=float), self.radius, self.convention)

    def scaled(self, factor: float) -> "Region":
        """Scale about the origin; the nominal radius scales with it."""
        if factor <= 0:
            raise GeometryError(f"Scale factor must be positive, got {factor}")
        radius = None if self.radius is None else self.radius * factor
        return Region(self.kind, self.vertices * factor, radius, self.convention)

    def _edge_lines(self) -> Tuple[np.ndarray, np.ndarray]:
        a = self.vertices
        d = np.roll(a, -1, axis=0) - a
        normals = np.column_stack([d[:, 1], -d[:, 0]])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return normals, np.sum(normals * a, axis=1)


def _signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


# ==============================================================================
# PORT LAYOUTS
# ==============================================================================
@dataclass(frozen=True, eq=False)
class PortLayout:
    ports: np.ndarray
    region: Region

    def __post_init__(self):
        p = np.array(self.ports, dtype=float).reshape(-1, 2) if np.size(self.ports) else np.empty((0, 2))
        if p.shape[0] < 1:
            raise GeometryError("A layout needs at least one port")
        if not np.all(np.isfinite(p)):
            raise GeometryError("Port coordinates must be finite")
        outside = np.flatnonzero(~self.region.contains(p))
        if outside.size:
            raise GeometryError(f"Ports {outside.tolist()} lie outside the region")
        p.setflags(write=False)
        object.__setattr__(self, "ports", p)

    @property
    def n_ports(self) -> int:
        return self.ports.shape[0]

    def with_ports(self, ports: ArrayLike) -> "PortLayout":
        return PortLayout(np.asarray(ports, dtype=float), self.region)

    def rotated(self, angle: float) -> "PortLayout":
        """Rotate ports about the region centroid; the region must be invariant under the angle."""
        c = self.region.centroid
        return self.with_ports((self.ports - c) @ _rotation(angle).T + c)

    def translated(self, offset: ArrayLike) -> "PortLayout":
        return PortLayout(self.ports + np.asarray(offset, dtype=float), self.region.translated(offset))


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate_points(points: ArrayLike, angle: float, center: ArrayLike = (0.0, 0.0)) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    return (np.asarray(points, dtype=float) - c) @ _rotation(angle).T + c


def circular_layout(n_ports: int, radius: float, region: Region, center_port: bool = False,
                    phase: float = 0.0) -> PortLayout:
    """
    Ports evenly spaced on a circle about the region centroid.
    With ``center_port`` the first port sits at the centroid and the remaining
    ``n_ports - 1`` go on the circle.
    """
    if n_ports < 1:
        raise GeometryError("n_ports must be >= 1")
    c = region.centroid
    n_ring = n_ports - 1 if center_port else n_ports
    angles = phase + 2.0 * math.pi * np.arange(n_ring) / max(n_ring, 1)
    ring = c + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    ports = np.vstack([c[None, :], ring]) if center_port else ring
    return PortLayout(ports, region)


def colocated_layout(n_ports: int, region: Region) -> PortLayout:
    return PortLayout(np.tile(region.centroid, (n_ports, 1)), region)


def random_layout(n_ports: int, region: Region, rng: np.random.Generator) -> PortLayout:
    return PortLayout(sample_points(region, rng, n_ports), region)


def layout_radii(layout: PortLayout) -> np.ndarray:
    return np.linalg.norm(layout.ports - layout.region.centroid, axis=1)


def peripheral_radius(layout: PortLayout) -> float:
    """Mean radius of all ports except the one closest to the centroid."""
    radii = np.sort(layout_radii(layout))
    if radii.size == 1:
        return float(radii[0])
    return float(np.mean(radii[1:]))


# ==============================================================================
# SAMPLING AND DISTANCES
# ==============================================================================
def sample_points(region: Region, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` uniform points by rejection from the bounding box."""
    lo, hi = region.bounding_box
    acceptance = region.area / float(np.prod(hi - lo))
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        batch = int((n - filled) / acceptance * 1.1) + 16
        cand = lo + (hi - lo) * rng.random((batch, 2))
        cand = cand[region.contains(cand, tol=0.0)]
        take = min(cand.shape[0], n - filled)
        out[filled:filled + take] = cand[:take]
        filled += take
    return out


def sample_uniform(region: Region, rng: np.random.Generator) -> np.ndarray:
    return sample_points(region, rng, 1)[0]


def clamped_distance(p: ArrayLike, u: ArrayLike, r0: float) -> Union[float, np.ndarray]:
    """max(|p - u|, r0), broadcasting over leading axes."""
    if r0 < 0:
        raise GeometryError(f"r0 must be >= 0, got {r0}")
    diff = np.asarray(p, dtype=float) - np.asarray(u, dtype=float)
    d = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), r0)
    return float(d) if np.ndim(d) == 0 else d


def nearest_port(ports: np.ndarray, users: np.ndarray) -> np.ndarray:
    """Index of the closest port for each user (unclamped distance, lowest index on ties)."""
    diff = np.asarray(users, dtype=float)[..., None, :] - ports
    return np.argmin(np.einsum("...k,...k->...", diff, diff), axis=-1)


# ==============================================================================
# NEIGHBOR GRID
# ==============================================================================
def neighbor_offsets(region: Region) -> np.ndarray:
    """Centroids of the six edge-sharing neighbors relative to the central cell, shape (6, 2)."""
    if region.kind is not RegionKind.HEXAGON:
        raise GeometryError("Neighbor replication is only defined for hexagonal regions")
    angles = math.pi / 6.0 + np.arange(6) * math.pi / 3.0
    return 2.0 * region.apothem * np.column_stack([np.cos(angles), np.sin(angles)])


def neighbor_ports(layout: PortLayout) -> List[PortLayout]:
    return [layout.translated(o) for o in neighbor_offsets(layout.region)]


# ==============================================================================
# PROJECTION
# ==============================================================================
def project_into_region(p: ArrayLike, region: Region) -> np.ndarray:
    """Euclidean projection onto the region; works on one point or an (n, 2) array."""
    pts = np.asarray(p, dtype=float)
    flat = pts.reshape(-1, 2).copy()
    outside = ~region.contains(flat, tol=0.0)
    if np.any(outside):
        a = region.vertices
        d = np.roll(a, -1, axis=0) - a
        q = flat[outside][:, None, :]
        t = np.clip(np.sum((q - a) * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
        cand = a + t[..., None] * d
        best = np.argmin(np.sum((q - cand) ** 2, axis=-1), axis=1)
        flat[outside] = cand[np.arange(best.size), best]
    return flat.reshape(pts.shape)


# ==============================================================================
# QUADRATURE
# ==============================================================================
def quadrature_points(region: Region, levels: int = 48) -> Tuple[np.ndarray, np.ndarray]:
    """
    Equal-area midpoint rule: the region is fanned into triangles from its
    centroid and every triangle is cut into ``levels**2`` congruent pieces.
    Returns the piece centroids and their areas (weights sum to the region area).
    """
    if levels < 1:
        raise GeometryError("levels must be >= 1")
    i, j = np.meshgrid(np.arange(levels), np.arange(levels), indexing="ij")
    up = (i + j) <= levels - 1
    down = (i + j) <= levels - 2
    bary = np.concatenate([
        np.column_stack([i[up] + 1.0 / 3.0, j[up] + 1.0 / 3.0]),
        np.column_stack([i[down] + 2.0 / 3.0, j[down] + 2.0 / 3.0]),
    ]) / levels

    c = region.centroid
    a = region.vertices
    b = np.roll(a, -1, axis=0)
    points, weights = [], []
    for va, vb in zip(a, b):
        tri_area = 0.5 * abs((va[0] - c[0]) * (vb[1] - c[1]) - (vb[0] - c[0]) * (va[1] - c[1]))
        points.append(c + bary[:, :1] * (va - c) + bary[:, 1:] * (vb - c))
        weights.append(np.full(bary.shape[0], tri_area / levels ** 2))
    return np.vstack(points), np.concatenate(weights)
