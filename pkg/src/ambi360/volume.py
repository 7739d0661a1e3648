"""Probability volumes over the radius-0.5 ball.

Voxels live on an R x R x R grid covering [-0.5, 0.5]^3, indexed
``data[z, y, x]`` so the flat C order is x-fastest. The linear voxel index
``(z * R + y) * R + x`` is the tie-break key used throughout.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import (
    ImageDims,
    PixelCoord,
    Projection,
    SphericalDirection,
    cell_index,
    pixel_to_sphere,
    vectors_to_normalized,
)

DEFAULT_RESOLUTION = 64
MIN_RESOLUTION = 8
BALL_RADIUS = 0.5
DEFAULT_SPREAD_DEG = 10.0
DEGENERATE_NORM = 1e-6


class DegenerateDirectionError(ValueError):
    """Raised when a region centroid is too close to the origin to point anywhere."""


@dataclass
class ProbabilityVolume:
    data: np.ndarray
    projection: Projection | None = None
    second_index: int | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or len(set(data.shape)) != 1:
            raise ValueError(f"volume must be a cube, got shape {data.shape}")
        self.data = data
        if self.projection is not None:
            self.projection = Projection.parse(self.projection)

    @property
    def resolution(self) -> int:
        return self.data.shape[0]

    def nonzero_mask(self) -> np.ndarray:
        return self.data != 0

    def with_data(self, data: np.ndarray) -> "ProbabilityVolume":
        return ProbabilityVolume(data, self.projection, self.second_index)


@dataclass
class SourceRegion:
    indices: np.ndarray  # ascending linear voxel indices
    mass: float
    centroid: tuple[float, float, float]
    resolution: int = field(default=DEFAULT_RESOLUTION)

    @property
    def direction(self) -> SphericalDirection:
        return region_direction(self)


def voxel_coordinate(i, resolution: int):
    """Center coordinate of voxel index ``i`` along one axis."""
    return -0.5 + (i + 0.5) / resolution


@functools.lru_cache(maxsize=8)
def _voxel_grid(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    c = voxel_coordinate(np.arange(resolution, dtype=np.float64), resolution)
    zz, yy, xx = np.meshgrid(c, c, c, indexing="ij")
    centers = np.stack([xx, yy, zz], axis=-1)
    norm = np.linalg.norm(centers, axis=-1)
    inside = (norm <= BALL_RADIUS) & (norm > 0.0)
    centers.flags.writeable = False
    inside.flags.writeable = False
    return centers, inside


def voxel_centers(resolution: int) -> np.ndarray:
    """(R, R, R, 3) array of (x, y, z) voxel centers, indexed [z, y, x]."""
    return _voxel_grid(resolution)[0]


def ball_mask(resolution: int) -> np.ndarray:
    """Voxels whose center lies in the ball (origin excluded)."""
    return _voxel_grid(resolution)[1]


@functools.lru_cache(maxsize=16)
def ray_cells(resolution: int, projection: Projection, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) map cell of every in-ball voxel, in ``ball_mask`` order."""
    centers, inside = _voxel_grid(resolution)
    xn, yn = vectors_to_normalized(centers[inside], projection)
    r, c = cell_index(xn, yn, shape)
    r.flags.writeable = False
    c.flags.writeable = False
    return r, c


def _check_resolution(resolution: int) -> int:
    resolution = int(resolution)
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution {resolution} below minimum {MIN_RESOLUTION}")
    return resolution


def lift_to_volume(m, projection=None, resolution: int = DEFAULT_RESOLUTION,
                   second_index: int | None = None) -> ProbabilityVolume:
    """Extend a planar map along rays: each in-ball voxel takes the value of
    the map cell its direction projects into."""
    resolution = _check_resolution(resolution)
    grid = np.asarray(getattr(m, "grid", m), dtype=np.float64)
    proj = Projection.parse(projection if projection is not None else m.projection)
    if grid.ndim != 2:
        raise ValueError(f"planar map must be 2D, got shape {grid.shape}")
    r, c = ray_cells(resolution, proj, grid.shape)
    data = np.zeros((resolution,) * 3, dtype=np.float32)
    data[ball_mask(resolution)] = grid[r, c]
    return ProbabilityVolume(data, proj, second_index)


def threshold(v: ProbabilityVolume, epsilon: float) -> ProbabilityVolume:
    """Zero every voxel with value <= epsilon."""
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    keep = v.data.astype(np.float64) > epsilon
    return v.with_data(np.where(keep, v.data, np.float32(0.0)))


_CONNECTIVITY_26 = np.ones((3, 3, 3), dtype=bool)


def extract_sources(v: ProbabilityVolume) -> list[SourceRegion]:
    """26-connected components of the nonzero voxels, heaviest first.

    Centroids are probability-weighted means, accumulated sequentially in
    ascending linear voxel order so results are reproducible bit for bit.
    """
    res = v.resolution
    labels, n = ndimage.label(v.data != 0, structure=_CONNECTIVITY_26)
    if n == 0:
        return []
    flat_labels = labels.ravel()
    order = np.flatnonzero(flat_labels)
    # stable sort keeps ascending voxel order within each component
    order = order[np.argsort(flat_labels[order], kind="stable")]
    bounds = np.searchsorted(flat_labels[order], np.arange(1, n + 2))
    flat = v.data.ravel()
    regions = []
    for k in range(n):
        idx = order[bounds[k]:bounds[k + 1]]
        p = flat[idx].astype(np.float64)
        z, rem = np.divmod(idx, res * res)
        y, x = np.divmod(rem, res)
        mass = np.cumsum(p)[-1]
        centroid = tuple(
            float(np.cumsum(p * voxel_coordinate(axis.astype(np.float64), res))[-1] / mass)
            for axis in (x, y, z)
        )
        regions.append(SourceRegion(idx, float(mass), centroid, res))
    regions.sort(key=lambda reg: (-reg.mass, int(reg.indices[0])))
    return regions


def region_direction(r: SourceRegion) -> SphericalDirection:
    cx, cy, cz = r.centroid
    if math.sqrt(cx * cx + cy * cy + cz * cz) <= DEGENERATE_NORM:
        raise DegenerateDirectionError(f"region centroid {r.centroid} is at the origin")
    return SphericalDirection(math.atan2(cy, cx), math.atan2(cz, math.hypot(cx, cy)))


def annotation_to_volume(sources: Sequence[PixelCoord], projection, dims: ImageDims,
                         resolution: int = DEFAULT_RESOLUTION,
                         spread: float = math.radians(DEFAULT_SPREAD_DEG),
                         second_index: int | None = None) -> ProbabilityVolume:
    """Ground-truth volume: value 1 inside a cone of half-angle ``spread``
    around each annotated pixel's direction."""
    resolution = _check_resolution(resolution)
    proj = Projection.parse(projection)
    data = np.zeros((resolution,) * 3, dtype=np.float32)
    if sources:
        centers, inside = _voxel_grid(resolution)
        pts = centers[inside]
        unit = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
        hit = np.zeros(len(pts), dtype=bool)
        cos_spread = math.cos(spread)
        for p in sources:
            d = pixel_to_sphere(p, dims, proj).to_vector()
            hit |= unit @ d >= cos_spread
        data[inside] = hit.astype(np.float32)
    return ProbabilityVolume(data, proj, second_index)
