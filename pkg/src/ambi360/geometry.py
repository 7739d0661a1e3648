"""Pixel <-> sphere mappings for equirectangular and cubemap frames.

Conventions used throughout the package:

    unit vector (X, Y, Z) = (cos(phi) cos(theta), sin(phi) cos(theta), sin(theta))

    X  front      phi = 0, theta = 0
    Y  left       phi = +pi/2
    Z  up         theta = +pi/2

The same frame is used by the B-format encoder, so a direction decoded from
an encoded signal can be compared with a geometric one without conversion.

Pixel coordinates follow the pixel-center convention: integer ``x`` is the
center of column ``x``. In normalized image coordinates ``xn = (x + 0.5) / W``
every pixel, and every cell of a coarse map, covers ``[i / n, (i + 1) / n)``.

Cubemaps are stored as a 3x2 atlas, row-major faces
``[front, right, back, left, top, bottom]``, each face a square of side F
(atlas is 3F wide, 2F high). Face-local ``(u, v)`` are in ``[0, 1)`` with u
growing to the viewer's right and v growing downward.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


class Projection(str, enum.Enum):
    EQUIRECT = "equirect"
    CUBEMAP = "cubemap3x2"

    @classmethod
    def parse(cls, value: "str | Projection") -> "Projection":
        if isinstance(value, Projection):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValueError(
                f"unknown projection {value!r}; expected 'equirect' or 'cubemap3x2'"
            ) from None


class Face(enum.IntEnum):
    FRONT = 0
    RIGHT = 1
    BACK = 2
    LEFT = 3
    TOP = 4
    BOTTOM = 5

    @classmethod
    def parse(cls, value: "str | int | Face") -> "Face":
        if isinstance(value, Face):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"invalid face id {value!r}") from None
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if 0 <= int(value) < 6:
                return cls(int(value))
        raise ValueError(f"invalid face id {value!r}")

    @property
    def label(self) -> str:
        return self.name.lower()


# center, right, down vectors of each face as seen from the cube center
_FACE_BASIS = np.array(
    [
        [[1, 0, 0], [0, -1, 0], [0, 0, -1]],   # front  +X
        [[0, -1, 0], [-1, 0, 0], [0, 0, -1]],  # right  -Y
        [[-1, 0, 0], [0, 1, 0], [0, 0, -1]],   # back   -X
        [[0, 1, 0], [1, 0, 0], [0, 0, -1]],    # left   +Y
        [[0, 0, 1], [0, -1, 0], [1, 0, 0]],    # top    +Z
        [[0, 0, -1], [0, -1, 0], [-1, 0, 0]],  # bottom -Z
    ],
    dtype=np.float64,
)
# (axis, sign) of each face normal, in tie-break priority order
_FACE_AXIS = ((0, 1.0), (1, -1.0), (0, -1.0), (1, 1.0), (2, 1.0), (2, -1.0))
ATLAS_COLS, ATLAS_ROWS = 3, 2

_ONE_MINUS = math.nextafter(1.0, 0.0)


def _wrap_phi(phi: float) -> float:
    if -math.pi < phi <= math.pi:
        return phi
    phi = math.remainder(phi, TWO_PI)
    return math.pi if phi <= -math.pi else phi


@dataclass(frozen=True)
class SphericalDirection:
    """Azimuth ``phi`` in (-pi, pi] and elevation ``theta`` in [-pi/2, pi/2].

    Any finite pair is accepted and folded into range (going over a pole
    flips the azimuth by pi). In-range values are stored untouched.
    """

    phi: float
    theta: float

    def __post_init__(self) -> None:
        phi, theta = float(self.phi), float(self.theta)
        if not (math.isfinite(phi) and math.isfinite(theta)):
            raise ValueError(f"non-finite direction ({phi}, {theta})")
        if not -HALF_PI <= theta <= HALF_PI:
            theta = math.remainder(theta, TWO_PI)
            if theta > HALF_PI:
                theta, phi = math.pi - theta, phi + math.pi
            elif theta < -HALF_PI:
                theta, phi = -math.pi - theta, phi + math.pi
        object.__setattr__(self, "phi", _wrap_phi(phi))
        object.__setattr__(self, "theta", theta)

    def to_vector(self) -> np.ndarray:
        return angles_to_vectors(self.phi, self.theta)

    @classmethod
    def from_vector(cls, vec: Iterable[float]) -> "SphericalDirection":
        x, y, z = (float(c) for c in vec)
        if x == 0.0 and y == 0.0 and z == 0.0:
            raise ValueError("zero vector has no direction")
        return cls(math.atan2(y, x), math.atan2(z, math.hypot(x, y)))

    @classmethod
    def from_degrees(cls, phi_deg: float, theta_deg: float) -> "SphericalDirection":
        return cls(math.radians(phi_deg), math.radians(theta_deg))


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError(f"image dims must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class PixelCoord:
    x: float
    y: float

    def check_within(self, dims: ImageDims) -> None:
        if not (0.0 <= self.x < dims.width and 0.0 <= self.y < dims.height):
            raise ValueError(
                f"pixel ({self.x}, {self.y}) outside image {dims.width}x{dims.height}"
            )


def angular_distance(a: SphericalDirection, b: SphericalDirection) -> float:
    """Great-circle angle between two directions, in radians."""
    va, vb = a.to_vector(), b.to_vector()
    # atan2 form stays accurate for nearly parallel vectors
    return math.atan2(float(np.linalg.norm(np.cross(va, vb))), float(np.dot(va, vb)))


# ---------------------------------------------------------------------------
# vectorized primitives


def angles_to_vectors(phi, theta) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    ct = np.cos(theta)
    return np.stack([np.cos(phi) * ct, np.sin(phi) * ct, np.sin(theta)], axis=-1)


def vectors_to_angles(vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vecs = np.asarray(vecs, dtype=np.float64)
    x, y, z = vecs[..., 0], vecs[..., 1], vecs[..., 2]
    phi = np.arctan2(y, x)
    phi = np.where(phi <= -np.pi, np.pi, phi)
    return phi, np.arctan2(z, np.hypot(x, y))


def face_uv_to_vectors(face, u, v) -> np.ndarray:
    """Unnormalized cube-surface points (half-extent 1) for face-local (u, v)."""
    basis = _FACE_BASIS[np.asarray(face, dtype=np.intp)]
    a = (2.0 * np.asarray(u, dtype=np.float64) - 1.0)[..., None]
    b = (2.0 * np.asarray(v, dtype=np.float64) - 1.0)[..., None]
    return basis[..., 0, :] + a * basis[..., 1, :] + b * basis[..., 2, :]


def vectors_to_face_uv(vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dominant-axis face selection; exact ties resolve in face order."""
    vecs = np.asarray(vecs, dtype=np.float64)
    m = np.abs(vecs).max(axis=-1)
    face = np.full(m.shape, -1, dtype=np.intp)
    for idx, (axis, sign) in enumerate(_FACE_AXIS):
        hit = (face < 0) & (sign * vecs[..., axis] == m)
        face[hit] = idx
    if np.any(face < 0):
        raise ValueError("zero vector has no cube face")
    p = vecs / m[..., None]
    basis = _FACE_BASIS[face]
    u = (np.einsum("...k,...k->...", p, basis[..., 1, :]) + 1.0) * 0.5
    v = (np.einsum("...k,...k->...", p, basis[..., 2, :]) + 1.0) * 0.5
    return face, np.clip(u, 0.0, _ONE_MINUS), np.clip(v, 0.0, _ONE_MINUS)


def normalized_to_vectors(xn, yn, projection: Projection) -> np.ndarray:
    """Unit vectors for normalized image coordinates in [0, 1)."""
    xn = np.asarray(xn, dtype=np.float64)
    yn = np.asarray(yn, dtype=np.float64)
    if projection is Projection.EQUIRECT:
        return angles_to_vectors(TWO_PI * xn - np.pi, HALF_PI - np.pi * yn)
    col = np.clip(np.floor(xn * ATLAS_COLS), 0, ATLAS_COLS - 1)
    row = np.clip(np.floor(yn * ATLAS_ROWS), 0, ATLAS_ROWS - 1)
    face = (row * ATLAS_COLS + col).astype(np.intp)
    pts = face_uv_to_vectors(face, xn * ATLAS_COLS - col, yn * ATLAS_ROWS - row)
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)


def vectors_to_normalized(vecs: np.ndarray, projection: Projection) -> tuple[np.ndarray, np.ndarray]:
    """Normalized image coordinates in [0, 1) for (not necessarily unit) vectors."""
    if projection is Projection.EQUIRECT:
        phi, theta = vectors_to_angles(vecs)
        xn = (phi + np.pi) / TWO_PI
        xn = np.where(xn >= 1.0, xn - 1.0, xn)
        yn = (HALF_PI - theta) / np.pi
        return xn, np.clip(yn, 0.0, _ONE_MINUS)
    face, u, v = vectors_to_face_uv(vecs)
    col, row = face % ATLAS_COLS, face // ATLAS_COLS
    xn = np.minimum((col + u) / ATLAS_COLS, _ONE_MINUS)
    yn = np.minimum((row + v) / ATLAS_ROWS, _ONE_MINUS)
    return xn, yn


def cell_index(xn, yn, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) of the coarse grid cell containing normalized coordinates."""
    rows, cols = shape
    r = np.clip(np.floor(np.asarray(yn) * rows), 0, rows - 1).astype(np.intp)
    c = np.clip(np.floor(np.asarray(xn) * cols), 0, cols - 1).astype(np.intp)
    return r, c


def pixel_grid_vectors(dims: ImageDims, projection: Projection) -> np.ndarray:
    """(H, W, 3) unit vectors through every pixel center."""
    xn = (np.arange(dims.width) + 0.5) / dims.width
    yn = (np.arange(dims.height) + 0.5) / dims.height
    gx, gy = np.meshgrid(xn, yn)
    return normalized_to_vectors(gx, gy, projection)


# ---------------------------------------------------------------------------
# scalar API


def equirect_to_sphere(p: PixelCoord, d: ImageDims) -> SphericalDirection:
    p.check_within(d)
    phi = TWO_PI * (p.x + 0.5) / d.width - math.pi
    theta = HALF_PI - math.pi * (p.y + 0.5) / d.height
    # the last half pixel row reaches past the pole; pin it there
    return SphericalDirection(phi, max(-HALF_PI, min(HALF_PI, theta)))


def sphere_to_equirect(s: SphericalDirection, d: ImageDims) -> PixelCoord:
    x = (s.phi + math.pi) * d.width / TWO_PI - 0.5
    if x < 0.0:
        x += d.width
    if x >= d.width:
        x -= d.width
    y = (HALF_PI - s.theta) * d.height / math.pi - 0.5
    y = min(max(y, 0.0), math.nextafter(float(d.height), 0.0))
    return PixelCoord(x, y)


def cubemap_to_sphere(face, u: float, v: float) -> SphericalDirection:
    f = Face.parse(face)
    if not (0.0 <= u < 1.0 and 0.0 <= v < 1.0):
        raise ValueError(f"face coordinates ({u}, {v}) outside [0, 1)")
    vec = face_uv_to_vectors(int(f), u, v)
    return SphericalDirection.from_vector(vec)


def sphere_to_cubemap(s: SphericalDirection) -> tuple[Face, float, float]:
    face, u, v = vectors_to_face_uv(s.to_vector())
    return Face(int(face)), float(u), float(v)


def atlas_to_sphere(p: PixelCoord, d: ImageDims) -> SphericalDirection:
    p.check_within(d)
    xn = min((p.x + 0.5) / d.width, _ONE_MINUS)
    yn = min((p.y + 0.5) / d.height, _ONE_MINUS)
    col, row = int(xn * ATLAS_COLS), int(yn * ATLAS_ROWS)
    return cubemap_to_sphere(row * ATLAS_COLS + col, xn * ATLAS_COLS - col, yn * ATLAS_ROWS - row)


def sphere_to_atlas(s: SphericalDirection, d: ImageDims) -> PixelCoord:
    face, u, v = sphere_to_cubemap(s)
    col, row = int(face) % ATLAS_COLS, int(face) // ATLAS_COLS
    x = (col + u) / ATLAS_COLS * d.width - 0.5
    y = (row + v) / ATLAS_ROWS * d.height - 0.5
    return PixelCoord(max(x, 0.0), max(y, 0.0))


def pixel_to_sphere(p: PixelCoord, d: ImageDims, projection) -> SphericalDirection:
    if Projection.parse(projection) is Projection.EQUIRECT:
        return equirect_to_sphere(p, d)
    return atlas_to_sphere(p, d)


def sphere_to_pixel(s: SphericalDirection, d: ImageDims, projection) -> PixelCoord:
    if Projection.parse(projection) is Projection.EQUIRECT:
        return sphere_to_equirect(s, d)
    return sphere_to_atlas(s, d)


def map_to_sphere_samples(m, projection=None) -> list[tuple[SphericalDirection, float]]:
    """The spherical mapping f: one (direction, probability) per map cell.

    ``m`` is a 2D array or a ``PlanarProbMap``; in the latter case the
    projection defaults to the map's own.
    """
    grid = np.asarray(getattr(m, "grid", m), dtype=np.float64)
    if projection is None:
        projection = getattr(m, "projection", None)
    proj = Projection.parse(projection)
    if grid.ndim != 2:
        raise ValueError(f"planar map must be 2D, got shape {grid.shape}")
    rows, cols = grid.shape
    xn = (np.arange(cols) + 0.5) / cols
    yn = (np.arange(rows) + 0.5) / rows
    gx, gy = np.meshgrid(xn, yn)
    phi, theta = vectors_to_angles(normalized_to_vectors(gx, gy, proj))
    return [
        (SphericalDirection(float(phi[r, c]), float(theta[r, c])), float(grid[r, c]))
        for r in range(rows)
        for c in range(cols)
    ]


def cell_angular_diameter(row: int, col: int, shape: tuple[int, int], projection, samples: int = 9) -> float:
    """Largest great-circle distance between points of one coarse map cell."""
    proj = Projection.parse(projection)
    rows, cols = shape
    eps = 1e-9
    xs = np.linspace(col / cols, (col + 1) / cols - eps, samples)
    ys = np.linspace(row / rows, (row + 1) / rows - eps, samples)
    gx, gy = np.meshgrid(xs, ys)
    vecs = normalized_to_vectors(gx.ravel(), gy.ravel(), proj)
    cos = np.clip(vecs @ vecs.T, -1.0, 1.0)
    return float(np.arccos(cos.min()))
