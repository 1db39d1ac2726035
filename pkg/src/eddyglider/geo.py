"""
Coordinates, study regions and gridded ocean fields.

Horizontal positions are (lon, lat) in degrees, depth is in meters and
positive downward with the sea surface at 0.  Kilometre-based work (path
lengths, glider kinematics, control) happens in a local equirectangular
frame anchored at the south-west corner of the region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import RegularGridInterpolator

K_LAT = 111.19  # km per degree of latitude

# Slack for boundary round-off when testing containment (deg / m units).
_EDGE_TOL = 1e-9


class OutsideRegion(ValueError):
    """A coordinate fell outside the region it was evaluated against."""


@dataclass(frozen=True)
class Region:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    depth_min: float = 0.0
    depth_max: float = 830.0

    def __post_init__(self):
        if not self.lon_min < self.lon_max:
            raise ValueError(f"lon_min {self.lon_min} must be < lon_max {self.lon_max}")
        if not self.lat_min < self.lat_max:
            raise ValueError(f"lat_min {self.lat_min} must be < lat_max {self.lat_max}")
        if not 0 <= self.depth_min < self.depth_max:
            raise ValueError(
                f"need 0 <= depth_min < depth_max, got {self.depth_min}, {self.depth_max}"
            )

    @property
    def lower(self) -> NDArray:
        return np.array([self.lon_min, self.lat_min, self.depth_min])

    @property
    def upper(self) -> NDArray:
        return np.array([self.lon_max, self.lat_max, self.depth_max])

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.lon_min + self.lon_max), 0.5 * (self.lat_min + self.lat_max))

    @property
    def lon_scale(self) -> float:
        """km per degree of longitude in the local frame."""
        return K_LAT * math.cos(math.radians(self.lat_min))

    @property
    def width_km(self) -> float:
        return (self.lon_max - self.lon_min) * self.lon_scale

    @property
    def height_km(self) -> float:
        return (self.lat_max - self.lat_min) * K_LAT

    def with_depth(self, depth_min: float, depth_max: float) -> "Region":
        return Region(self.lon_min, self.lon_max, self.lat_min, self.lat_max,
                      depth_min, depth_max)

    def contains(self, points: ArrayLike, tol: float = _EDGE_TOL) -> NDArray:
        """Boolean mask of which (lon, lat, depth) rows lie inside the region."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=1)

    def contains_surface(self, lonlat: ArrayLike, tol: float = _EDGE_TOL) -> NDArray:
        p = np.atleast_2d(np.asarray(lonlat, dtype=float))
        return np.all((p >= self.lower[:2] - tol) & (p <= self.upper[:2] + tol), axis=1)

    def to_dict(self) -> dict:
        return {
            "lon_min": self.lon_min, "lon_max": self.lon_max,
            "lat_min": self.lat_min, "lat_max": self.lat_max,
            "depth_min": self.depth_min, "depth_max": self.depth_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(**{k: float(d[k]) for k in
                      ("lon_min", "lon_max", "lat_min", "lat_max")},
                   depth_min=float(d.get("depth_min", 0.0)),
                   depth_max=float(d.get("depth_max", 830.0)))


# The Kuroshio Extension box used throughout the experiments.
SURVEY_REGION = Region(142.3, 145.2, 37.25, 39.15, 0.0, 830.0)


@dataclass(frozen=True)
class GridSpec:
    """Regular lon/lat grid with an explicit list of depth levels."""

    n_lon: int = 30
    n_lat: int = 20
    levels: tuple[float, ...] = field(
        default_factory=lambda: tuple(np.linspace(0.0, 830.0, 39).tolist()))

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(z) for z in self.levels))
        if self.n_lon < 2 or self.n_lat < 2 or len(self.levels) < 2:
            raise ValueError("each grid axis needs at least two nodes")
        if np.any(np.diff(self.levels) <= 0):
            raise ValueError("depth levels must be strictly increasing")

    @property
    def n_dep(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_lon, self.n_lat, self.n_dep)

    @property
    def size(self) -> int:
        return self.n_lon * self.n_lat * self.n_dep

    def axes(self, region: Region) -> tuple[NDArray, NDArray, NDArray]:
        lons = np.linspace(region.lon_min, region.lon_max, self.n_lon)
        lats = np.linspace(region.lat_min, region.lat_max, self.n_lat)
        return lons, lats, np.asarray(self.levels)

    def nodes(self, region: Region) -> NDArray:
        """All node coordinates, lon-major then lat then depth, shape (size, 3)."""
        lons, lats, deps = self.axes(region)
        g = np.meshgrid(lons, lats, deps, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def to_dict(self) -> dict:
        return {"n_lon": self.n_lon, "n_lat": self.n_lat, "n_dep": self.n_dep,
                "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        levels = d.get("levels")
        if levels is None:
            levels = np.linspace(0.0, 830.0, int(d.get("n_dep", 39))).tolist()
        spec = cls(int(d["n_lon"]), int(d["n_lat"]), tuple(levels))
        if "n_dep" in d and int(d["n_dep"]) != spec.n_dep:
            raise ValueError(f"n_dep={d['n_dep']} disagrees with {spec.n_dep} levels")
        return spec


class GriddedField3D:
    """
    Scalar values on the nodes of a lon-lat-depth grid.

    ``values`` has shape ``spec.shape``.  Evaluation between nodes is
    trilinear, so the field is exact at nodes and linear along grid edges.
    """

    def __init__(self, region: Region, spec: GridSpec, values: ArrayLike, name: str = "value"):
        v = np.array(values, dtype=float)
        if v.size != spec.size:
            raise ValueError(f"expected {spec.size} values for grid {spec.shape}, got {v.size}")
        v = v.reshape(spec.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        self.region = region
        self.spec = spec
        self.values = v
        self.name = name
        self._interp = RegularGridInterpolator(spec.axes(region), v, method="linear")

    def __repr__(self):
        return f"GriddedField3D({self.name!r}, shape={self.spec.shape})"

    def __call__(self, points: ArrayLike) -> NDArray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.region.contains(p)
        if not inside.all():
            bad = p[~inside][0]
            raise OutsideRegion(f"point (lon={bad[0]}, lat={bad[1]}, depth={bad[2]}) "
                                f"is outside the field region")
        p = np.clip(p, self.region.lower, self.region.upper)
        return self._interp(p)

    def nodes(self) -> NDArray:
        return self.spec.nodes(self.region)

    def surface(self) -> NDArray:
        """Values on the shallowest level, shape (n_lon, n_lat)."""
        return self.values[:, :, 0]

    def as_dataset(self) -> "Dataset":
        return Dataset(self.nodes(), self.values.ravel())

    def range(self) -> float:
        return float(self.values.max() - self.values.min())


def field_eval(f: GriddedField3D, x: ArrayLike) -> float | NDArray:
    """Trilinear lookup; returns a float for a single point, else an array."""
    out = f(x)
    if np.ndim(x) == 1:
        return float(out[0])
    return out


@dataclass(frozen=True)
class Dataset:
    """Scattered samples: coordinates ``X`` (n, 3) and values ``y`` (n,)."""

    X: NDArray
    y: NDArray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(-1, 3)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} coordinates but {len(y)} values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.zeros((0, 3)), np.zeros(0))

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            return cls.empty()
        return cls(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]))


def project(lonlat: ArrayLike, region: Region) -> NDArray:
    """(lon, lat) degrees -> (x, y) km in the region's equirectangular frame."""
    p = np.asarray(lonlat, dtype=float)
    x = (p[..., 0] - region.lon_min) * region.lon_scale
    y = (p[..., 1] - region.lat_min) * K_LAT
    return np.stack([x, y], axis=-1)


def unproject(xy: ArrayLike, region: Region) -> NDArray:
    p = np.asarray(xy, dtype=float)
    lon = p[..., 0] / region.lon_scale + region.lon_min
    lat = p[..., 1] / K_LAT + region.lat_min
    return np.stack([lon, lat], axis=-1)


def normalize(x: ArrayLike, region: Region) -> NDArray:
    """Min-max scale (lon, lat, depth) onto the unit cube."""
    lo, hi = region.lower, region.upper
    span = hi - lo
    if np.any(span <= 0):
        raise ValueError("degenerate region axis")
    return (np.asarray(x, dtype=float) - lo) / span


def denormalize(u: ArrayLike, region: Region) -> NDArray:
    lo, hi = region.lower, region.upper
    return np.asarray(u, dtype=float) * (hi - lo) + lo


def kfold_split(n_or_data, k: int, seed: int = 0) -> list[NDArray]:
    """
    Shuffle indices and deal them into ``k`` folds whose sizes differ by at
    most one.  Accepts a Dataset or a sample count; returns index arrays.
    """
    n = len(n_or_data) if not isinstance(n_or_data, (int, np.integer)) else int(n_or_data)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]
