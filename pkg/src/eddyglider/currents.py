"""
Subsurface current imputation from surface currents.

The velocity ratio rho(z) = v(z) / v(0) of each horizontal component is
modelled as a cubic polynomial in depth (meters).  Given a fitted ratio
model, the current anywhere in the water column is the surface current at
that (lon, lat) scaled component-wise by rho(depth).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from numpy.typing import NDArray

from .geo import GriddedField3D, Region, project, unproject

# Cubic ratio coefficients (intercept, z, z^2, z^3), z in meters.
DEFAULT_RATIO_ZONAL = (1.03, -3.84e-4, -4.93e-6, 4.98e-9)
DEFAULT_RATIO_MERIDIONAL = (1.03, -6.27e-4, -4.62e-6, 4.87e-9)

RATIO_BOUNDS = (-0.5, 1.5)
SURFACE_FLOOR = 1e-3  # m/s; smaller surface components are not used as denominators
DAY = 86400.0

# Depths are fitted in km so the cubic design matrix stays well conditioned.
_Z_SCALE = 1000.0


def eval_cubic(coeffs: Sequence[float], z) -> NDArray | float:
    b0, b1, b2, b3 = coeffs
    z = np.asarray(z, dtype=float)
    out = b0 + z * (b1 + z * (b2 + z * b3))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RatioFit:
    coefficients: tuple[float, float, float, float]
    r2: float
    n: int
    n_excluded: int = 0

    def __call__(self, z):
        return eval_cubic(self.coefficients, z)


@dataclass(frozen=True)
class RatioModel:
    zonal: RatioFit
    meridional: RatioFit

    @classmethod
    def reference(cls) -> "RatioModel":
        return cls(RatioFit(DEFAULT_RATIO_ZONAL, 0.774, 0), RatioFit(DEFAULT_RATIO_MERIDIONAL, 0.711, 0))

    @classmethod
    def identity(cls) -> "RatioModel":
        one = RatioFit((1.0, 0.0, 0.0, 0.0), 1.0, 0)
        return cls(one, one)

    def rho(self, depth) -> tuple:
        return self.zonal(depth), self.meridional(depth)

    def to_dict(self) -> dict:
        def part(f: RatioFit):
            return {"coefficients": list(f.coefficients), "r2": f.r2,
                    "n": f.n, "n_excluded": f.n_excluded}
        return {"zonal": part(self.zonal), "meridional": part(self.meridional),
                "depth_units": "m"}

    @classmethod
    def from_dict(cls, d: dict) -> "RatioModel":
        def part(p):
            c = tuple(float(v) for v in p["coefficients"])
            if len(c) != 4:
                raise ValueError("ratio model needs four coefficients per component")
            return RatioFit(c, float(p.get("r2", math.nan)), int(p.get("n", 0)),
                            int(p.get("n_excluded", 0)))
        return cls(part(d["zonal"]), part(d["meridional"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "RatioModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class RatioPairs:
    depth: NDArray
    ratio: NDArray
    n_excluded: int


def build_ratio_dataset(history: Sequence[tuple[GriddedField3D, GriddedField3D]],
                        floor: float = SURFACE_FLOOR,
                        bounds: tuple[float, float] = RATIO_BOUNDS
                        ) -> tuple[RatioPairs, RatioPairs]:
    """
    Collect (depth, ratio) pairs from current snapshots.

    ``history`` is a sequence of (u, v) fields.  Columns whose surface
    component is below ``floor`` in magnitude are skipped for that
    component; ratios outside ``bounds`` are dropped and counted.
    """
    if not history:
        raise ValueError("empty current history")
    out = []
    for comp in (0, 1):
        depths, ratios, dropped = [], [], 0
        for snap in history:
            f = snap[comp]
            vals = f.values
            surf = vals[:, :, :1]
            ok_col = np.abs(surf[..., 0]) >= floor
            with np.errstate(divide="ignore", invalid="ignore"):
                r = vals / surf
            r = r[ok_col]                       # (n_cols, n_dep)
            z = np.broadcast_to(np.asarray(f.spec.levels), r.shape)
            keep = (r >= bounds[0]) & (r <= bounds[1])
            dropped += int((~keep).sum())
            depths.append(z[keep])
            ratios.append(r[keep])
        depth = np.concatenate(depths)
        ratio = np.concatenate(ratios)
        if depth.size == 0:
            raise ValueError("all velocity ratio pairs were excluded")
        out.append(RatioPairs(depth, ratio, dropped))
    return out[0], out[1]


def fit_ratio_cubic(depth, ratio, n_excluded: int = 0) -> RatioFit:
    """Ordinary least squares of ratio on (1, z, z^2, z^3)."""
    z = np.asarray(depth, dtype=float)
    r = np.asarray(ratio, dtype=float)
    if len(np.unique(z)) < 4:
        raise ValueError(f"rank-deficient cubic design: {len(np.unique(z))} distinct depths, need 4")
    zs = z / _Z_SCALE
    D = np.vander(zs, 4, increasing=True)
    beta, *_ = np.linalg.lstsq(D, r, rcond=None)
    beta = beta / _Z_SCALE ** np.arange(4)
    resid = r - eval_cubic(beta, z)
    ss_tot = float(np.sum((r - r.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-14 * max(1.0, float(np.sum(r ** 2))):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RatioFit(tuple(float(b) for b in beta), r2, int(len(z)), int(n_excluded))


def fit_ratio_model(history) -> RatioModel:
    zonal, merid = build_ratio_dataset(history)
    return RatioModel(fit_ratio_cubic(zonal.depth, zonal.ratio, zonal.n_excluded),
                      fit_ratio_cubic(merid.depth, merid.ratio, merid.n_excluded))


def impute(x, surface_uv, m: RatioModel) -> tuple[float, float]:
    """Current at ``x = (lon, lat, depth)`` from the surface current there."""
    depth = x[2]
    if depth < 0:
        raise ValueError("depth must be non-negative")
    ru, rv = m.rho(depth)
    return ru * surface_uv[0], rv * surface_uv[1]


# --------------------------------------------------------------------------
# Current providers.  Positions are in the region's km frame.

class CurrentSource(Protocol):
    def velocity(self, t: float, x: float, y: float, depth: float) -> tuple[float, float]:
        ...


class SurfaceSnapshot:
    """
    One day of surface current on a regular km grid plus a ratio model;
    the shape the planner's rollout kernel consumes.
    """

    def __init__(self, xs: NDArray, ys: NDArray, u: NDArray, v: NDArray, ratio: RatioModel):
        self.xs = np.ascontiguousarray(xs, dtype=float)
        self.ys = np.ascontiguousarray(ys, dtype=float)
        self.u = np.ascontiguousarray(u, dtype=float)
        self.v = np.ascontiguousarray(v, dtype=float)
        self.ratio_u = np.array(ratio.zonal.coefficients)
        self.ratio_v = np.array(ratio.meridional.coefficients)

    def surface(self, x: float, y: float) -> tuple[float, float]:
        return _bilinear2(self.xs, self.ys, self.u, self.v, x, y)


def _bilinear2(xs, ys, u, v, x, y):
    i = min(max(int(np.searchsorted(xs, x) - 1), 0), len(xs) - 2)
    j = min(max(int(np.searchsorted(ys, y) - 1), 0), len(ys) - 2)
    tx = min(max((x - xs[i]) / (xs[i + 1] - xs[i]), 0.0), 1.0)
    ty = min(max((y - ys[j]) / (ys[j + 1] - ys[j]), 0.0), 1.0)
    w00, w10, w01, w11 = (1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty
    uu = w00 * u[i, j] + w10 * u[i + 1, j] + w01 * u[i, j + 1] + w11 * u[i + 1, j + 1]
    vv = w00 * v[i, j] + w10 * v[i + 1, j] + w01 * v[i, j + 1] + w11 * v[i + 1, j + 1]
    return float(uu), float(vv)


def _day_index(t: float, n: int) -> int:
    return min(max(int(t // DAY), 0), n - 1)


class CurrentProvider:
    """
    Daily surface current snapshots + a ratio model.  Serves imputed
    subsurface currents; switches snapshot at each day boundary.
    """

    def __init__(self, region: Region, lons: NDArray, lats: NDArray,
                 surface_u: Sequence[NDArray], surface_v: Sequence[NDArray],
                 ratio: RatioModel):
        if len(surface_u) == 0 or len(surface_u) != len(surface_v):
            raise ValueError("need matching, non-empty u and v snapshot lists")
        self.region = region
        self.ratio = ratio
        xs = project(np.stack([lons, np.full_like(lons, region.lat_min)], 1), region)[:, 0]
        ys = project(np.stack([np.full_like(lats, region.lon_min), lats], 1), region)[:, 1]
        self.snapshots = [SurfaceSnapshot(xs, ys, u, v, ratio)
                          for u, v in zip(surface_u, surface_v)]

    @classmethod
    def from_fields(cls, snapshots: Sequence[tuple[GriddedField3D, GriddedField3D]],
                    ratio: RatioModel) -> "CurrentProvider":
        u0 = snapshots[0][0]
        lons, lats, _ = u0.spec.axes(u0.region)
        return cls(u0.region, lons, lats, [s[0].surface() for s in snapshots],
                   [s[1].surface() for s in snapshots], ratio)

    @classmethod
    def uniform(cls, region: Region, u: float, v: float,
                ratio: RatioModel | None = None) -> "CurrentProvider":
        lons = np.array([region.lon_min, region.lon_max])
        lats = np.array([region.lat_min, region.lat_max])
        return cls(region, lons, lats, [np.full((2, 2), float(u))], [np.full((2, 2), float(v))],
                   ratio or RatioModel.identity())

    def snapshot(self, t: float) -> SurfaceSnapshot:
        return self.snapshots[_day_index(t, len(self.snapshots))]

    def velocity(self, t, x, y, depth):
        s = self.snapshot(t)
        su, sv = s.surface(x, y)
        return float(eval_cubic(s.ratio_u, depth)) * su, float(eval_cubic(s.ratio_v, depth)) * sv


class GriddedCurrent:
    """Daily 3D (u, v) snapshots evaluated trilinearly; the simulation truth."""

    def __init__(self, snapshots: Sequence[tuple[GriddedField3D, GriddedField3D]]):
        if not snapshots:
            raise ValueError("no current snapshots")
        self.snapshots = list(snapshots)
        self.region = snapshots[0][0].region

    def velocity(self, t, x, y, depth):
        u, v = self.snapshots[_day_index(t, len(self.snapshots))]
        r = self.region
        lon, lat = unproject((x, y), r)
        p = np.array([[lon, lat, min(max(depth, r.depth_min), r.depth_max)]])
        return float(u(p)[0]), float(v(p)[0])


class UniformCurrent:
    def __init__(self, u: float = 0.0, v: float = 0.0):
        self.u, self.v = float(u), float(v)

    def velocity(self, t, x, y, depth):
        return self.u, self.v
