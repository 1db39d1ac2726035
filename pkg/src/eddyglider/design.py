"""Glider formations and their evaluation by reconstruction error."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tps
from .blocking import blocked_fit, make_partition
from .geo import Dataset, GriddedField3D, Region, unproject
from .glider import GliderParams, LinePath, sample_line

KINDS = ("parallel", "parallel90", "center", "cross")


@dataclass(frozen=True)
class Formation:
    kind: str
    K: int
    paths: tuple[LinePath, ...]

    def length_km(self, region: Region) -> float:
        return float(sum(p.length_km(region) for p in self.paths))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K, "paths": [p.to_dict() for p in self.paths]}


def _zonal(n: int, region: Region) -> list[LinePath]:
    lats = region.lat_min + (np.arange(1, n + 1) - 0.5) * (region.lat_max - region.lat_min) / n
    return [LinePath((region.lon_min, la), (region.lon_max, la)) for la in lats]


def _meridional(n: int, region: Region) -> list[LinePath]:
    lons = region.lon_min + (np.arange(1, n + 1) - 0.5) * (region.lon_max - region.lon_min) / n
    return [LinePath((lo, region.lat_min), (lo, region.lat_max)) for lo in lons]


def _chord(theta_deg: float, region: Region) -> LinePath:
    """Chord through the region centre at angle theta (from east), clipped to the rectangle."""
    W, H = region.width_km, region.height_km
    cx, cy = W / 2, H / 2
    dx, dy = math.cos(math.radians(theta_deg)), math.sin(math.radians(theta_deg))
    ts = []
    if abs(dx) > 1e-12:
        ts.append(cx / abs(dx))
    if abs(dy) > 1e-12:
        ts.append(cy / abs(dy))
    t = min(ts)
    a = np.array([cx - t * dx, cy - t * dy])
    b = np.array([cx + t * dx, cy + t * dy])
    ends = unproject(np.clip(np.array([a, b]), 0.0, [W, H]), region)
    return LinePath(tuple(ends[0]), tuple(ends[1]))


def gen_formation(kind: str, K: int, region: Region) -> Formation:
    """
    Build a formation of ``K`` straight survey lines.

    parallel: zonal lines, parallel90: meridional lines, both evenly spaced
    with a half-spacing inset from the boundary.  center: chords through the
    region centre at angles (j - 1) 180 / K from east.  cross: ceil(K/2)
    zonal plus floor(K/2) meridional lines.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown formation kind {kind!r}; expected one of {KINDS}")
    if K < 2:
        raise ValueError(f"a formation needs at least 2 gliders, got {K}")
    if kind == "parallel":
        paths = _zonal(K, region)
    elif kind == "parallel90":
        paths = _meridional(K, region)
    elif kind == "center":
        paths = [_chord(j * 180.0 / K, region) for j in range(K)]
    else:
        paths = _zonal(math.ceil(K / 2), region) + _meridional(K // 2, region)
    return Formation(kind, int(K), tuple(paths))


@dataclass(frozen=True)
class InterpConfig:
    blocks: tuple[int, int, int] = (3, 3, 40)
    overlap: float = 0.25
    method: str = "tps"
    lam: object = "gcv"
    threads: int = 1

    def to_dict(self) -> dict:
        return {"blocks": list(self.blocks), "overlap": self.overlap, "method": self.method,
                "lambda": self.lam, "threads": self.threads}


@dataclass
class DesignReport:
    kind: str
    K: int
    length_km: float
    rmse: float = math.nan
    corr: float = math.nan
    n_samples: int = 0
    fit_seconds: float = 0.0
    depth_profile: list = field(default_factory=list)    # (depth, rmse) rows
    error: str | None = None
    formation: Formation | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K, "length_km": self.length_km, "rmse": self.rmse,
                "corr": self.corr, "n_samples": self.n_samples, "fit_seconds": self.fit_seconds,
                "error": self.error}


def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def pearson(pred, truth) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    a, b = pred - pred.mean(), truth - truth.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        return 1.0 if np.allclose(pred, truth) else math.nan
    return float(a @ b) / den


def design_region(truth: GriddedField3D, g: GliderParams) -> Region:
    """Normalisation box: the truth region cut at the glider's maximum depth."""
    r = truth.region
    return r.with_depth(r.depth_min, min(r.depth_max, g.h_max))


def default_test_set(truth: GriddedField3D, g: GliderParams) -> Dataset:
    """Grid nodes the gliders can reach (depth <= h_max)."""
    d = truth.as_dataset()
    return d.subset(d.X[:, 2] <= g.h_max + 1e-9)


def sample_formation(f: Formation, truth: GriddedField3D, g: GliderParams) -> Dataset:
    return Dataset.concat([sample_line(p, g, truth)[0] for p in f.paths])


def eval_design(f: Formation, truth: GriddedField3D, cfg: InterpConfig | None = None,
                test: Dataset | None = None, g: GliderParams | None = None,
                raise_errors: bool = False) -> DesignReport:
    """
    Sample ``truth`` along every path of ``f``, fit a blocked interpolator and
    score it on ``test``.  A singular fit is recorded on the report (or
    re-raised tagged with the formation when ``raise_errors``).
    """
    cfg = cfg or InterpConfig()
    g = g or GliderParams()
    test = test if test is not None else default_test_set(truth, g)
    if len(test) == 0:
        raise ValueError("empty test set")
    region = design_region(truth, g)
    rep = DesignReport(f.kind, f.K, f.length_km(truth.region), formation=f)
    samples = sample_formation(f, truth, g)
    rep.n_samples = len(samples)
    t0 = time.perf_counter()
    try:
        model = blocked_fit(samples, make_partition(*cfg.blocks, cfg.overlap), region,
                            lam=cfg.lam, method=cfg.method, threads=cfg.threads)
        pred = model(test.X)
    except (tps.SingularSystem, ValueError) as exc:
        if raise_errors:
            raise type(exc)(f"{f.kind} K={f.K}: {exc}") from exc
        rep.error = f"{type(exc).__name__}: {exc}"
        return rep
    rep.fit_seconds = time.perf_counter() - t0
    rep.rmse = rmse(pred, test.y)
    rep.corr = pearson(pred, test.y)
    depths = test.X[:, 2]
    for z in np.unique(depths):
        sel = depths == z
        rep.depth_profile.append((float(z), rmse(pred[sel], test.y[sel])))
    return rep


def select_best(reports: list[DesignReport]) -> DesignReport:
    """Lowest-RMSE successful report; ties go to the earliest candidate."""
    ok = [r for r in reports if r.ok and np.isfinite(r.rmse)]
    if not ok:
        causes = "; ".join(f"{r.kind} K={r.K}: {r.error}" for r in reports)
        raise ValueError(f"every formation failed to produce a reconstruction ({causes[:500]})")
    return min(ok, key=lambda r: r.rmse)   # min keeps the first of equal keys


def sweep(kinds, Ks, truth: GriddedField3D, cfg: InterpConfig | None = None,
          g: GliderParams | None = None) -> list[DesignReport]:
    g = g or GliderParams()
    test = default_test_set(truth, g)
    return [eval_design(gen_formation(k, K, truth.region), truth, cfg, test, g)
            for k in kinds for K in Ks]


def formation_lengths(kind: str, Ks, region: Region) -> dict[int, float]:
    return {K: gen_formation(kind, K, region).length_km(region) for K in Ks}
