"""
Glider kinematics.

A glider moves along its heading at a fixed horizontal speed through the
water while its depth follows a triangle wave: dive at ``v_z`` to
``h_max``, climb back to the surface, repeat.  One dive plus climb is a
*cycle*; the glider can only be re-commanded when it surfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geo import Dataset, GriddedField3D, Region, project, unproject


@dataclass(frozen=True)
class GliderParams:
    v_h: float = 0.5          # m/s through the water
    v_z: float = 0.2          # m/s
    h_max: float = 800.0      # m
    sample_dt: float = 50.0   # s
    pitch: float = 20.0       # deg, informational only; slopes use v_z / v_h

    def __post_init__(self):
        for name in ("v_h", "v_z", "h_max", "sample_dt", "pitch"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def period(self) -> float:
        """Seconds per dive + climb."""
        return 2.0 * self.h_max / self.v_z

    @property
    def tan_beta(self) -> float:
        return self.v_z / self.v_h

    @property
    def run_per_cycle_km(self) -> float:
        return self.v_h * self.period / 1000.0


@dataclass(frozen=True)
class LinePath:
    start: tuple[float, float]   # (lon, lat)
    end: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "end", (float(self.end[0]), float(self.end[1])))
        if self.start == self.end:
            raise ValueError("path start and end coincide")

    def endpoints_km(self, region: Region) -> tuple[NDArray, NDArray]:
        return project(self.start, region), project(self.end, region)

    def length_km(self, region: Region) -> float:
        a, b = self.endpoints_km(region)
        return float(np.hypot(*(b - a)))

    def line_coefficients(self, region: Region) -> tuple[float, float, float]:
        """(A, B, C) of A x + B y + C = 0 through the projected endpoints."""
        (x1, y1), (x2, y2) = self.endpoints_km(region)
        A, B = y2 - y1, x1 - x2
        return float(A), float(B), float(-(A * x1 + B * y1))

    def to_dict(self) -> dict:
        return {"start": list(self.start), "end": list(self.end)}


@dataclass
class Track:
    t: NDArray
    lon: NDArray
    lat: NDArray
    depth: NDArray
    surfacings: list[int]

    def __len__(self):
        return len(self.t)

    def points(self) -> NDArray:
        return np.column_stack([self.lon, self.lat, self.depth])


class ExitedRegion(RuntimeError):
    def __init__(self, position, t=None):
        super().__init__(f"glider left the study region at {tuple(np.round(position, 3))} km")
        self.position = np.asarray(position)
        self.t = t


def depth_at(t, g: GliderParams):
    """Triangle-wave depth at time ``t`` seconds into a dive/climb sequence."""
    tau = np.mod(np.asarray(t, dtype=float), g.period)
    half = g.period / 2
    z = np.where(tau <= half, g.v_z * tau, g.v_z * (g.period - tau))
    return np.clip(z, 0.0, g.h_max)


def expected_cycles(L_km: float, g: GliderParams) -> float:
    """Dive cycles needed to cover ``L_km`` in still water: L tan(beta) / 2h."""
    if L_km <= 0:
        raise ValueError("path length must be positive")
    return L_km * g.tan_beta / (2 * g.h_max / 1000.0)


def travel_ratio(L_km: float, g: GliderParams) -> float:
    """Half the still-water relative progress per cycle: h / (L tan(beta))."""
    return (g.h_max / 1000.0) / (L_km * g.tan_beta)


def sample_line(path: LinePath, g: GliderParams, truth: GriddedField3D) -> tuple[Dataset, Track]:
    """
    Sample ``truth`` every ``sample_dt`` seconds along a straight run with no
    current.  The run stops at the path's end point.
    """
    region = truth.region
    ends = np.array([path.start, path.end])
    if not region.contains_surface(ends).all():
        raise ValueError(f"path {path.start} -> {path.end} leaves the field region")
    a, b = path.endpoints_km(region)
    L = float(np.hypot(*(b - a)))
    total = L * 1000.0 / g.v_h
    n = int(math.floor(total / g.sample_dt + 1e-9)) + 1
    t = np.arange(n) * g.sample_dt
    frac = np.minimum(t * g.v_h / 1000.0 / L, 1.0)
    xy = a + frac[:, None] * (b - a)
    lonlat = unproject(xy, region)
    z = depth_at(t, g)
    pts = np.column_stack([lonlat, z])
    y = truth(pts)
    surf = [int(i) for i in np.flatnonzero(z == 0)]
    return Dataset(pts, y), Track(t, lonlat[:, 0], lonlat[:, 1], z, surf)


def simulate_cycle(pos, heading: float, g: GliderParams, current, dt: float | None = None,
                   t0: float = 0.0, region: Region | None = None):
    """
    Integrate one dive + climb with forward Euler.

    ``pos`` is the surface position in the region's km frame, ``heading``
    is degrees counter-clockwise from east, ``current.velocity(t, x, y, z)``
    returns (u, v) in m/s and is held fixed over each step.  Returns the
    surfacing position and the sub-track as rows of (t, x, y, depth).
    Raises ExitedRegion if the glider leaves ``region``.
    """
    dt = g.sample_dt if dt is None else float(dt)
    if not 0 < dt <= g.sample_dt:
        raise ValueError("dt must be in (0, sample_dt]")
    P = g.period
    n = int(math.ceil(P / dt - 1e-9))
    phi = math.radians(heading)
    vx, vy = g.v_h * math.cos(phi), g.v_h * math.sin(phi)
    W = region.width_km if region is not None else math.inf
    Hh = region.height_km if region is not None else math.inf
    x, y = float(pos[0]), float(pos[1])
    rows = [(t0, x, y, 0.0)]
    t = 0.0
    for _ in range(n):
        h = min(dt, P - t)
        z = float(depth_at(t, g)) if t < P else 0.0
        cu, cv = current.velocity(t0 + t, x, y, z)
        x += (vx + cu) * h / 1000.0
        y += (vy + cv) * h / 1000.0
        t += h
        if region is not None and not (-1e-9 <= x <= W + 1e-9 and -1e-9 <= y <= Hh + 1e-9):
            raise ExitedRegion((x, y), t0 + t)
        rows.append((t0 + t, x, y, float(depth_at(t, g)) if t < P else 0.0))
    return np.array([x, y]), np.array(rows)
