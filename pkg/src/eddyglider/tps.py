"""
Thin-plate-spline smoothing in three dimensions.

The fitted function is ``beta0 + beta . x + sum_i w_i G(|x - X_i|)`` where
``(w, beta)`` solve the bordered system

    [[A + lam I, P], [P^T, 0]] [w; beta] = [y; 0],

with ``A_ij = G(|X_i - X_j|)`` and ``P = [1, X]``.  Coordinates are expected
in unit-cube units so that ``lam`` is scale-free.  The radial kernel is the
two-dimensional Green function ``r^2 log r`` applied to 3D distances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist

from .geo import Dataset

COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-8
MIN_POINTS = 5
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-9, 1, 25).tolist())


class SingularSystem(np.linalg.LinAlgError):
    """The TPS linear system cannot be solved reliably for this sample."""


def green(r: ArrayLike, p: int = 2) -> NDArray:
    """Green function G_p: r^(4-p) log r for p = 2, 4, else r^(4-p); G(0) = 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    out = np.zeros_like(r)
    pos = r > 0
    if p in (2, 4):
        out[pos] = r[pos] ** (4 - p) * np.log(r[pos])
    else:
        out[pos] = r[pos] ** (4 - p)
    return out


def green2(r):
    out = green(r, 2)
    return float(out) if out.ndim == 0 else out


def _kernel(XA: NDArray, XB: NDArray) -> NDArray:
    d2 = cdist(XA, XB, "sqeuclidean")
    pos = d2 > 0
    out = np.zeros_like(d2)
    out[pos] = 0.5 * d2[pos] * np.log(d2[pos])
    return out


def _affine_basis(X: NDArray) -> NDArray:
    return np.hstack([np.ones((len(X), 1)), X])


@dataclass(frozen=True)
class TpsModel:
    centers: NDArray
    w: NDArray
    beta: NDArray
    lam: float
    cond: float = float("nan")
    fit_seconds: float = 0.0

    def __call__(self, x: ArrayLike) -> NDArray:
        return tps_predict(self, x)

    @property
    def n(self) -> int:
        return len(self.w)

    def extrapolating(self, x: ArrayLike) -> NDArray:
        """True where ``x`` lies outside the bounding box of the centers."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = self.centers.min(0), self.centers.max(0)
        return np.any((x < lo) | (x > hi), axis=1)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "w": self.w.tolist(),
                "beta": self.beta.tolist(), "lambda": self.lam, "cond": self.cond}

    @classmethod
    def from_dict(cls, d: dict) -> "TpsModel":
        return cls(np.asarray(d["centers"], float).reshape(-1, 3), np.asarray(d["w"], float),
                   np.asarray(d["beta"], float), float(d["lambda"]),
                   float(d.get("cond", float("nan"))))


def _check_points(X: NDArray) -> None:
    n = len(X)
    if n < MIN_POINTS:
        raise SingularSystem(f"{n} samples; need at least {MIN_POINTS} for 4 affine terms")
    order = np.lexsort(X.T[::-1])
    Xs = X[order]
    dup = np.all(Xs[1:] == Xs[:-1], axis=1)
    if dup.any():
        k = int(np.argmax(dup))
        raise SingularSystem(f"duplicate coordinates at {Xs[k].tolist()}: kernel rows coincide")
    s = np.linalg.svd(_affine_basis(X), compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise SingularSystem("samples are coplanar; affine coefficients are not identifiable")


def tps_fit(d: Dataset, lam: float = 0.0) -> TpsModel:
    """Solve the bordered TPS system by LU with partial pivoting."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    t0 = time.perf_counter()
    X, y = d.X, d.y
    _check_points(X)
    n = len(X)
    P = _affine_basis(X)
    M = np.zeros((n + 4, n + 4))
    M[:n, :n] = _kernel(X, X)
    M[:n, :n][np.diag_indices(n)] += lam
    M[:n, n:] = P
    M[n:, :n] = P.T
    rhs = np.concatenate([y, np.zeros(4)])

    lu, piv = sla.lu_factor(M, check_finite=False)
    anorm = np.abs(M).sum(axis=0).max()
    rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not cond <= COND_LIMIT:
        raise SingularSystem(f"coefficient matrix is ill-conditioned (cond ~ {cond:.2e})")
    sol = sla.lu_solve((lu, piv), rhs, check_finite=False)
    scale = anorm * np.linalg.norm(sol) + np.linalg.norm(rhs)
    resid = np.linalg.norm(M @ sol - rhs) / scale if scale > 0 else 0.0
    if resid > RESIDUAL_LIMIT:
        raise SingularSystem(f"linear solve residual {resid:.1e} exceeds {RESIDUAL_LIMIT:.0e}")
    return TpsModel(X.copy(), sol[:n], sol[n:], float(lam), float(cond),
                    time.perf_counter() - t0)


def tps_predict(m: TpsModel, x: ArrayLike) -> NDArray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = m.beta[0] + x @ m.beta[1:]
    # chunk to bound memory for large query sets
    step = max(1, 2_000_000 // max(m.n, 1))
    for s in range(0, len(x), step):
        out[s:s + step] += _kernel(x[s:s + step], m.centers) @ m.w
    return out


@dataclass
class GcvReport:
    lambdas: list[float]
    scores: list[float]
    lam: float
    skipped: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas, "scores": self.scores, "lambda": self.lam}


class _Spectrum:
    """
    Eigen-decomposition of the kernel projected onto the complement of the
    affine space.  With P = QR and Z the last n-4 columns of Q,
    I - H(lam) = lam Z (Z^T A Z + lam I)^-1 Z^T, so every GCV score is O(n)
    once ``Z^T A Z = V diag(e) V^T`` is known.
    """

    def __init__(self, X: NDArray, y: NDArray):
        n = len(X)
        Q, _ = np.linalg.qr(_affine_basis(X), mode="complete")
        Z = Q[:, 4:]
        T = Z.T @ _kernel(X, X) @ Z
        self.e, V = np.linalg.eigh(0.5 * (T + T.T))
        self.c = V.T @ (Z.T @ y)
        self.n = n

    def score(self, lam: float) -> float:
        if lam == 0:
            return np.nan
        f = lam / (self.e + lam)
        tr = float(f.sum())
        if tr <= 0:
            return np.nan
        rss = float(np.sum((f * self.c) ** 2))
        return self.n * rss / tr ** 2


def gcv_select(d: Dataset, lambda_grid=DEFAULT_LAMBDA_GRID) -> GcvReport:
    """
    Pick lambda minimising n ||(I - H) y||^2 / tr(I - H)^2 over the grid.
    Ties go to the larger lambda.
    """
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise ValueError("empty lambda grid")
    if any(v < 0 for v in grid):
        raise ValueError("lambda values must be non-negative")
    _check_points(d.X)
    if len(grid) == 1:
        return GcvReport(grid, [np.nan], grid[0])
    spec = _Spectrum(d.X, d.y)
    scores = [spec.score(v) for v in grid]
    valid = [i for i, s in enumerate(scores) if np.isfinite(s)]
    if not valid:
        raise ValueError("trace(I - H) is zero for every lambda on the grid")
    best = min(scores[i] for i in valid)
    scale = float(np.mean((d.y - d.y.mean()) ** 2)) + 1e-300
    tied = [i for i in valid if scores[i] <= best + 1e-10 * scale]
    pick = max(tied, key=lambda i: grid[i])
    skipped = [grid[i] for i in range(len(grid)) if i not in valid]
    return GcvReport(grid, scores, grid[pick], skipped)


def fit_gcv(d: Dataset, lambda_grid=DEFAULT_LAMBDA_GRID) -> tuple[TpsModel, GcvReport]:
    """
    GCV selection followed by the fit.  If the chosen lambda leaves the
    system too ill-conditioned, the next larger grid value is tried.
    """
    report = gcv_select(d, lambda_grid)
    candidates = sorted(v for v in report.lambdas if v >= report.lam and v not in report.skipped)
    err = None
    for lam in candidates:
        try:
            model = tps_fit(d, lam)
        except SingularSystem as exc:
            if "ill-conditioned" not in str(exc):
                raise
            err = exc
            continue
        report.lam = lam
        return model, report
    raise err
