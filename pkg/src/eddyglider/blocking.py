"""
Overlapping-cuboid decomposition of the unit cube.

Each axis of the normalised domain is split into ``B`` intervals widened by
an overlap ratio ``c``; the cuboids are the products of the per-axis
intervals.  A local interpolator is fitted on the samples inside every
cuboid and predictions are blended with weights proportional to the
squared product of the query's distances to the nearest face of each
covering cuboid.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from . import tps
from .geo import Dataset, OutsideRegion, Region, denormalize, normalize

MIN_BLOCK_SAMPLES = 5
MEMBER_TOL = 1e-12   # closed intervals, with slack for min-max scaling round-off
IDW_POWER = 5.0
IDW_NEIGHBORS = 64


@dataclass(frozen=True)
class BlockPartition:
    counts: tuple[int, int, int]
    c: float
    intervals: tuple[NDArray, NDArray, NDArray]   # per axis, shape (B, 2)

    @property
    def n_blocks(self) -> int:
        return int(np.prod(self.counts))

    def indices(self):
        """Block indices (i, j, k), longitude-major."""
        return itertools.product(*(range(b) for b in self.counts))

    def bounds(self, ijk) -> tuple[NDArray, NDArray]:
        lo = np.array([self.intervals[a][ijk[a], 0] for a in range(3)])
        hi = np.array([self.intervals[a][ijk[a], 1] for a in range(3)])
        return lo, hi

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "c": self.c,
                "intervals": [iv.tolist() for iv in self.intervals]}


def axis_intervals(B: int, c: float) -> NDArray:
    i = np.arange(1, B + 1)
    lo = np.maximum(0.0, (i - 1 - c / 2) / B)
    hi = np.minimum(1.0, (i + c / 2) / B)
    return np.column_stack([lo, hi])


def make_partition(B_long: int, B_lat: int, B_dep: int, c: float = 0.25) -> BlockPartition:
    counts = (int(B_long), int(B_lat), int(B_dep))
    if min(counts) < 1:
        raise ValueError("block counts must be >= 1")
    if not 0 <= c < 1:
        raise ValueError(f"overlap ratio must lie in [0, 1), got {c}")
    ivs = tuple(axis_intervals(b, c) for b in counts)
    for iv in ivs:
        iv.setflags(write=False)
    return BlockPartition(counts, float(c), ivs)


def _axis_members(iv: NDArray, u: NDArray) -> NDArray:
    """(m, B) membership of coordinates ``u`` in each interval."""
    return (u[:, None] >= iv[None, :, 0] - MEMBER_TOL) & (u[:, None] <= iv[None, :, 1] + MEMBER_TOL)


def _axis_weights(iv: NDArray, u: NDArray) -> NDArray:
    """
    Per-axis blending factors, shape (m, B).

    Cuboid weights d^2 / sum d^2 with d = s_long s_lat s_dep factor over the
    axes because the covering cuboids form a product set, so each axis
    contributes s^2 / sum s^2 over its covering intervals.  When a single
    interval covers the coordinate the factor is 1, which is also the limit
    on the faces of the unit cube where every s vanishes.
    """
    mem = _axis_members(iv, u)
    s = np.minimum(np.abs(u[:, None] - iv[None, :, 0]), np.abs(u[:, None] - iv[None, :, 1]))
    s2 = np.where(mem, s * s, 0.0)
    tot = s2.sum(axis=1, keepdims=True)
    ncov = mem.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(tot > 0, s2 / tot, mem / np.maximum(ncov, 1))
    return w


def _check_unit(u: NDArray) -> None:
    bad = np.any((u < -MEMBER_TOL) | (u > 1 + MEMBER_TOL), axis=1)
    if bad.any():
        raise OutsideRegion(f"normalized point {u[bad][0].tolist()} is outside the unit cube")


def block_weights(p: BlockPartition, x: ArrayLike) -> NDArray:
    """
    Blending weight of every cuboid at normalized point(s) ``x``; returns
    shape (n_blocks,) for one point or (m, n_blocks) for many.
    """
    u = np.atleast_2d(np.asarray(x, dtype=float))
    _check_unit(u)
    wl, wa, wd = (_axis_weights(p.intervals[a], u[:, a]) for a in range(3))
    w = (wl[:, :, None, None] * wa[:, None, :, None] * wd[:, None, None, :]).reshape(len(u), -1)
    return w[0] if np.ndim(x) == 1 else w


# --------------------------------------------------------------------------
# inverse distance weighting

def idw_predict(d: Dataset, x: ArrayLike, p: float = IDW_POWER, k: int | None = IDW_NEIGHBORS,
                tree: cKDTree | None = None) -> NDArray | float:
    """
    Inverse-distance-weighted average of the ``k`` nearest samples
    (``k=None`` uses all).  A query on top of a sample returns its value.
    """
    if len(d) == 0:
        raise ValueError("IDW needs at least one sample")
    if p <= 0:
        raise ValueError("power must be positive")
    q = np.atleast_2d(np.asarray(x, dtype=float))
    kk = len(d) if k is None else min(int(k), len(d))
    tree = tree or cKDTree(d.X)
    dist, idx = tree.query(q, k=kk)
    dist = dist.reshape(len(q), kk)
    idx = idx.reshape(len(q), kk)
    vals = d.y[idx]
    dmin = dist[:, :1]
    exact = dmin[:, 0] == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # scale by the nearest distance so large powers cannot overflow
        w = np.where(dist > 0, (dmin / dist) ** p, 0.0)
    out = np.where(exact, vals[:, 0], (w * vals).sum(1) / np.where(exact, 1.0, w.sum(1)))
    return float(out[0]) if np.ndim(x) == 1 else out


class IdwModel:
    def __init__(self, d: Dataset, p: float = IDW_POWER, k: int | None = IDW_NEIGHBORS):
        self.d, self.p, self.k = d, p, k
        self.tree = cKDTree(d.X)

    def __call__(self, x):
        return idw_predict(self.d, x, self.p, self.k, self.tree)


# --------------------------------------------------------------------------
# blocked fit / predict

@dataclass
class BlockFit:
    index: tuple[int, int, int]
    n: int
    status: str                  # "ok" | "empty" | "singular"
    lam: float | None = None
    cond: float | None = None
    seconds: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return {"index": list(self.index), "n": self.n, "status": self.status, "lambda": self.lam,
                "cond": self.cond, "seconds": self.seconds, "message": self.message}


@dataclass
class BlockedModel:
    partition: BlockPartition
    region: Region
    method: str
    models: list            # per block, longitude-major; None when empty or singular
    report: list[BlockFit]
    fit_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def __call__(self, x: ArrayLike) -> NDArray:
        return blocked_predict(self, x)

    @property
    def n_fitted(self) -> int:
        return sum(m is not None for m in self.models)

    def report_dict(self) -> dict:
        return {"method": self.method, "partition": self.partition.to_dict(),
                "region": self.region.to_dict(), "fit_seconds": self.fit_seconds,
                "n_fitted": self.n_fitted, "blocks": [b.to_dict() for b in self.report]}


def _fit_one(sub: Dataset, method: str, lam):
    if method == "idw":
        return IdwModel(sub), None, None
    if lam == "gcv":
        model, rep = tps.fit_gcv(sub)
        return model, rep.lam, model.cond
    model = tps.tps_fit(sub, float(lam))
    return model, model.lam, model.cond


def blocked_fit(d: Dataset, p: BlockPartition, region: Region, lam="gcv", method: str = "tps",
                threads: int = 1) -> BlockedModel:
    """
    Fit one local interpolator per cuboid.

    ``d`` holds physical (lon, lat, depth) coordinates and is normalised
    with ``region``.  ``lam`` is "gcv" (per-block selection) or a fixed
    value.  Cuboids with fewer than five samples are left empty; singular
    cuboids are skipped and recorded in the report.
    """
    if method not in ("tps", "idw"):
        raise ValueError(f"unknown method {method!r}")
    t0 = time.perf_counter()
    U = normalize(d.X, region)
    _check_unit(U)
    U = np.clip(U, 0.0, 1.0)
    mem = [_axis_members(p.intervals[a], U[:, a]) for a in range(3)]
    idx = list(p.indices())

    def work(ijk):
        sel = mem[0][:, ijk[0]] & mem[1][:, ijk[1]] & mem[2][:, ijk[2]]
        n = int(sel.sum())
        if n < MIN_BLOCK_SAMPLES:
            return None, BlockFit(ijk, n, "empty")
        tb = time.perf_counter()
        try:
            model, lam_used, cond = _fit_one(Dataset(U[sel], d.y[sel]), method, lam)
        except tps.SingularSystem as exc:
            return None, BlockFit(ijk, n, "singular", seconds=time.perf_counter() - tb,
                                  message=str(exc))
        return model, BlockFit(ijk, n, "ok", lam_used, cond, time.perf_counter() - tb)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, idx))
    else:
        results = [work(ijk) for ijk in idx]
    models = [r[0] for r in results]
    report = [r[1] for r in results]
    if all(m is None for m in models):
        if all(b.status == "empty" for b in report):
            raise ValueError(f"every cuboid has fewer than {MIN_BLOCK_SAMPLES} samples")
        raise tps.SingularSystem("no cuboid could be fitted: "
                                 + "; ".join(b.message for b in report if b.message)[:500])
    return BlockedModel(p, region, method, models, report, time.perf_counter() - t0)


def blocked_predict(m: BlockedModel, x: ArrayLike) -> NDArray | float:
    """Blend the fitted cuboids covering each query point."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    U = normalize(X, m.region)
    _check_unit(U)
    U = np.clip(U, 0.0, 1.0)
    p = m.partition
    W = [_axis_weights(p.intervals[a], U[:, a]) for a in range(3)]
    M = [_axis_members(p.intervals[a], U[:, a]) for a in range(3)]
    num = np.zeros(len(U))
    den = np.zeros(len(U))
    covered = np.zeros(len(U), dtype=bool)
    fallback_num = np.zeros(len(U))
    fallback_cnt = np.zeros(len(U))
    for ijk, model in zip(p.indices(), m.models):
        if model is None:
            continue
        i, j, k = ijk
        sel = M[0][:, i] & M[1][:, j] & M[2][:, k]
        if not sel.any():
            continue
        rows = np.flatnonzero(sel)
        f = np.asarray(model(U[rows]), dtype=float)
        w = W[0][rows, i] * W[1][rows, j] * W[2][rows, k]
        num[rows] += w * f
        den[rows] += w
        covered[rows] = True
        fallback_num[rows] += f
        fallback_cnt[rows] += 1
    if not covered.all():
        bad = X[~covered][0]
        raise OutsideRegion(f"no fitted cuboid covers (lon={bad[0]}, lat={bad[1]}, depth={bad[2]})")
    # renormalise over fitted cuboids; when only zero-weight fitted cuboids
    # cover a point (it sits on their faces), average them
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback_num / np.maximum(fallback_cnt, 1))
    return float(out[0]) if np.ndim(x) == 1 else out


def cv_rmse(d: Dataset, fit_predict, k: int = 5, seed: int = 0) -> dict:
    """
    k-fold cross-validated RMSE.  ``fit_predict(train, test_X)`` returns
    predictions for the held-out coordinates.
    """
    from .geo import kfold_split

    folds = kfold_split(d, k, seed)
    sq, per_fold = [], []
    for f in folds:
        mask = np.ones(len(d), dtype=bool)
        mask[f] = False
        pred = fit_predict(d.subset(mask), d.X[f])
        err = (np.asarray(pred) - d.y[f]) ** 2
        sq.append(err)
        per_fold.append(float(np.sqrt(err.mean())))
    return {"rmse": float(np.sqrt(np.concatenate(sq).mean())), "fold_rmse": per_fold}


def unit_to_region(u, region: Region):
    return denormalize(u, region)
