"""Closed-form synthetic mesoscale eddy (temperature, salinity, swirl current)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .currents import DEFAULT_RATIO_ZONAL, eval_cubic
from .geo import K_LAT, SURVEY_REGION, GridSpec, GriddedField3D, Region, project


@dataclass(frozen=True)
class EddyParams:
    center_lon: float = 143.5
    center_lat: float = 38.4
    sigma_km: float = 45.0          # horizontal e-folding radius
    t_surface: float = 18.0         # deg C
    t_lapse: float = 0.0125         # deg C per m
    t_amplitude: float = 2.5        # warm-core anomaly, deg C
    s_surface: float = 34.6         # g/kg
    s_lapse: float = 2.5e-4         # g/kg per m
    s_amplitude: float = 0.25
    thermocline_m: float = 200.0    # depth of the anomaly peak
    decay_m: float = 220.0          # vertical e-folding scale of the anomaly
    swirl_speed: float = 0.3        # peak azimuthal speed before the depth profile, m/s
    rotation: int = -1              # +1 counter-clockwise, -1 clockwise (warm core, N hemisphere)
    noise_std: float = 0.0          # optional iid noise on T and S
    seed: int = 0

    def __post_init__(self):
        if self.sigma_km <= 0:
            raise ValueError("sigma_km must be positive")
        if self.decay_m <= 0:
            raise ValueError("decay_m must be positive")
        if self.rotation not in (-1, 1):
            raise ValueError("rotation must be +1 or -1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EddyParams":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise KeyError(f"unknown eddy parameter(s): {sorted(unknown)}")
        return cls(**d)


def eddy_profiles(p: EddyParams, region: Region, points: np.ndarray):
    """T, S, u, v at arbitrary (lon, lat, depth) points from the closed form."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xy = project(pts[:, :2], region) - project((p.center_lon, p.center_lat), region)
    r2 = np.sum(xy ** 2, axis=1)
    z = pts[:, 2]
    horiz = np.exp(-r2 / (2 * p.sigma_km ** 2))
    vert = np.exp(-((z - p.thermocline_m) / p.decay_m) ** 2)
    temp = p.t_surface - p.t_lapse * z + p.t_amplitude * horiz * vert
    salt = p.s_surface - p.s_lapse * z + p.s_amplitude * horiz * vert

    r = np.sqrt(r2)
    speed = (p.swirl_speed * (r / p.sigma_km) * np.exp(0.5 - r2 / (2 * p.sigma_km ** 2))
             * eval_cubic(DEFAULT_RATIO_ZONAL, z))
    with np.errstate(invalid="ignore", divide="ignore"):
        ex = np.where(r > 0, xy[:, 0] / r, 0.0)
        ey = np.where(r > 0, xy[:, 1] / r, 0.0)
    u = -p.rotation * speed * ey
    v = p.rotation * speed * ex
    return temp, salt, u, v


def synth_eddy(params: EddyParams | None = None, spec: GridSpec | None = None,
               region: Region = SURVEY_REGION):
    """
    Sample the synthetic eddy on a grid.

    Returns ``(temperature, salinity, (u, v))`` as GriddedField3D objects.
    The vertical current component is taken as zero.
    """
    p = params or EddyParams()
    spec = spec or GridSpec()
    nodes = spec.nodes(region)
    temp, salt, u, v = eddy_profiles(p, region, nodes)
    if p.noise_std > 0:
        rng = np.random.default_rng(p.seed)
        temp = temp + rng.normal(0, p.noise_std, temp.shape)
        salt = salt + rng.normal(0, p.noise_std * p.s_amplitude / p.t_amplitude, salt.shape)
    return (GriddedField3D(region, spec, temp, "temperature"),
            GriddedField3D(region, spec, salt, "salinity"),
            (GriddedField3D(region, spec, u, "u"), GriddedField3D(region, spec, v, "v")))


def eddy_series(params: EddyParams, days: int, drift_km_per_day=(-3.0, 0.5),
                spec: GridSpec | None = None, region: Region = SURVEY_REGION):
    """
    Daily current snapshots of a slowly translating eddy; day ``d`` has its
    centre moved by ``d * drift_km_per_day``.
    """
    snaps = []
    for d in range(days):
        lon = params.center_lon + d * drift_km_per_day[0] / region.lon_scale
        lat = params.center_lat + d * drift_km_per_day[1] / K_LAT
        _, _, cur = synth_eddy(replace(params, center_lon=lon, center_lat=lat), spec, region)
        snaps.append(cur)
    return snaps


def peak_temperature(p: EddyParams) -> float:
    return p.t_surface - p.t_lapse * p.thermocline_m + p.t_amplitude


def swirl_speed_at(p: EddyParams, r_km: float, depth: float) -> float:
    """Azimuthal speed magnitude straight from the closed form."""
    return (p.swirl_speed * (r_km / p.sigma_km) * math.exp(0.5 - r_km ** 2 / (2 * p.sigma_km ** 2))
            * eval_cubic(DEFAULT_RATIO_ZONAL, depth))
