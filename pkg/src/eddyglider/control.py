"""
Receding-horizon heading control of a glider following a straight line.

At every surfacing the controller chooses turning angles for the next
``H`` cycles by minimising ``w1 f1 + w2 f2`` (mean distance of the
predicted surfacings to the line, distance of the last one to the target)
over rollouts in the *imputed* current, applies only the first angle and
then advances the glider one cycle in the *true* current.  Weights and the
horizon adapt to the progress made per cycle.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np
from numpy.typing import NDArray

from .currents import CurrentProvider, CurrentSource, SurfaceSnapshot, eval_cubic
from .geo import SURVEY_REGION, Region, unproject
from .glider import ExitedRegion, GliderParams, LinePath, depth_at, simulate_cycle, travel_ratio
from .optim import OptConfig, OptProblem, minimize

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the system TBB is too old for numba; avoid its warning
    numba.config.THREADING_LAYER = "workqueue"

EXIT_PENALTY = 1e6

MISSIONS = {
    1: LinePath((145.1, 38.0), (142.4, 38.0)),
    2: LinePath((142.4, 38.6), (145.1, 38.6)),
    3: LinePath((143.3, 37.3), (143.3, 39.1)),
    4: LinePath((144.2, 39.1), (144.2, 37.3)),
    5: LinePath((142.4, 37.3), (145.1, 39.1)),
}


@dataclass(frozen=True)
class ControlConfig:
    H0: int = 10
    H_max: int = 40                      # hard cap on the horizon; bounds per-surfacing cost
    eta_km: float = 2.0
    turn_bound: float = 100.0            # degrees
    c_min: float = 0.1
    c_max: float = 10.0
    w1_bounds: tuple[float, float] = (0.1, 10.0)
    w2_bounds: tuple[float, float] = (0.1, 10.0)
    eps: float = 1e-5
    delta: float | None = None           # None: travel_ratio of the mission
    max_time: float = 30 * 86400.0
    dt: float = 50.0                     # integration step for rollouts and the true step
    optimizer: str = "de"
    opt: OptConfig = OptConfig()
    glider: GliderParams = GliderParams()
    region: Region = SURVEY_REGION

    def __post_init__(self):
        if self.H0 < 1 or self.H_max < self.H0:
            raise ValueError("need 1 <= H0 <= H_max")
        if not 0 < self.c_min <= 1 <= self.c_max:
            raise ValueError("need 0 < c_min <= 1 <= c_max")
        for lo, hi in (self.w1_bounds, self.w2_bounds):
            if not 0 < lo < hi:
                raise ValueError("weight bounds must satisfy 0 < min < max")
        if self.eta_km <= 0 or self.eps <= 0 or self.turn_bound <= 0:
            raise ValueError("eta_km, eps and turn_bound must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["region"] = self.region.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ControlConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown control option(s): {sorted(unknown)}")
        if "opt" in d:
            d["opt"] = OptConfig.from_dict(d["opt"])
        if "glider" in d:
            d["glider"] = GliderParams(**d["glider"])
        if "region" in d:
            d["region"] = Region.from_dict(d["region"])
        for k in ("w1_bounds", "w2_bounds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class ControlState:
    k: int
    w1: float
    w2: float
    H: int
    phi: float                     # heading, degrees CCW from east
    positions: list                # surfacing history in km


@dataclass
class Mission:
    path: LinePath
    region: Region

    def __post_init__(self):
        if not self.region.contains_surface(np.array([self.path.start, self.path.end])).all():
            raise ValueError("mission end points must lie inside the region")
        self.start_km, self.target_km = self.path.endpoints_km(self.region)
        self.length_km = float(np.hypot(*(self.target_km - self.start_km)))
        self.line = self.path.line_coefficients(self.region)

    def relative_distance(self, pos) -> float:
        return float(np.hypot(*(self.target_km - np.asarray(pos)))) / self.length_km


def line_distance(points, line) -> NDArray:
    A, B, C = line
    p = np.atleast_2d(np.asarray(points, dtype=float))
    return np.abs(A * p[:, 0] + B * p[:, 1] + C) / math.hypot(A, B)


def f1(surfacings, line) -> float:
    """Mean point-to-line distance of the predicted surfacings (km)."""
    return float(np.mean(line_distance(surfacings, line)))


def f2(surfacings, target) -> float:
    """Distance from the last predicted surfacing to the target (km)."""
    return float(np.hypot(*(np.asarray(target) - np.atleast_2d(surfacings)[-1])))


def combine(w1: float, w2: float, v1: float, v2: float) -> float:
    return w1 * v1 + w2 * v2


def update_weights(w1: float, w2: float, r_prev: float, r_now: float, delta: float,
                   cfg: ControlConfig) -> tuple[float, float, float, float]:
    """
    Returns (w1, w2, c, dr).  dr = max(r_prev - r_now, eps); c = delta / dr
    clamped to [c_min, c_max]; w1 / c and w2 * c are clamped to their bounds.
    """
    dr = max(r_prev - r_now, cfg.eps)
    c = min(max(delta / dr, cfg.c_min), cfg.c_max)
    w1n = min(max(w1 / c, cfg.w1_bounds[0]), cfg.w1_bounds[1])
    w2n = min(max(w2 * c, cfg.w2_bounds[0]), cfg.w2_bounds[1])
    return w1n, w2n, c, dr


def update_horizon(H: int, w2: float, r_now: float, dr: float, cfg: ControlConfig) -> int:
    """Grow the horizon while w2 is saturated, shrink it otherwise, cap by cycles left."""
    H = H + cfg.H0 if w2 >= cfg.w2_bounds[1] else max(cfg.H0, H - cfg.H0)
    # round before ceil so 0.05 / 0.01 = 5.000000000000001 counts as 5 cycles
    left = math.ceil(round(r_now / dr, 9))
    return int(max(1, min(H, left, cfg.H_max)))


# --------------------------------------------------------------------------
# rollout kernel

def cycle_schedule(g: GliderParams, dt: float):
    """Step lengths and the depth at the start of each step for one cycle."""
    P = g.period
    n = int(math.ceil(P / dt - 1e-9))
    t = np.arange(n) * dt
    h = np.minimum(dt, P - t)
    return h, depth_at(t, g)


@numba.njit(cache=True, inline="always")
def _bilinear(xs, ys, U, V, x, y):
    nx, ny = xs.shape[0], ys.shape[0]
    i = np.searchsorted(xs, x) - 1
    i = min(max(i, 0), nx - 2)
    j = np.searchsorted(ys, y) - 1
    j = min(max(j, 0), ny - 2)
    tx = min(max((x - xs[i]) / (xs[i + 1] - xs[i]), 0.0), 1.0)
    ty = min(max((y - ys[j]) / (ys[j + 1] - ys[j]), 0.0), 1.0)
    w00 = (1 - tx) * (1 - ty)
    w10 = tx * (1 - ty)
    w01 = (1 - tx) * ty
    w11 = tx * ty
    u = w00 * U[i, j] + w10 * U[i + 1, j] + w01 * U[i, j + 1] + w11 * U[i + 1, j + 1]
    v = w00 * V[i, j] + w10 * V[i + 1, j] + w01 * V[i, j + 1] + w11 * V[i + 1, j + 1]
    return u, v


@numba.njit(parallel=True, cache=True)
def _rollout_kernel(angles, x0, y0, phi0, vh, h, ru, rv, xs, ys, U, V, width, height,
                    A, B, C, tx, ty, w1, w2, penalty, out_pts):
    m, H = angles.shape
    nsteps = h.shape[0]
    norm = math.sqrt(A * A + B * B)
    res = np.empty(m)
    for c in numba.prange(m):
        x, y, phi = x0, y0, phi0
        acc = 0.0
        exited = False
        for k in range(H):
            phi += angles[c, k]
            rad = phi * math.pi / 180.0
            vx = vh * math.cos(rad)
            vy = vh * math.sin(rad)
            for s in range(nsteps):
                su, sv = _bilinear(xs, ys, U, V, x, y)
                x += (vx + ru[s] * su) * h[s] / 1000.0
                y += (vy + rv[s] * sv) * h[s] / 1000.0
                if x < -1e-9 or x > width + 1e-9 or y < -1e-9 or y > height + 1e-9:
                    exited = True
                    break
            if exited:
                break
            acc += abs(A * x + B * y + C) / norm
            if out_pts.shape[0] > 0:
                out_pts[c, k, 0] = x
                out_pts[c, k, 1] = y
        if exited:
            res[c] = penalty
        else:
            d2 = math.sqrt((tx - x) ** 2 + (ty - y) ** 2)
            res[c] = w1 * (acc / H) + w2 * d2
    return res


class Planner:
    """
    Evaluates candidate turning-angle sequences by rolling the glider out
    in the imputed current.  The surface snapshot of the planning day is
    frozen over the horizon.  Holds no reference to the true current.
    """

    def __init__(self, provider: CurrentProvider, mission: Mission, cfg: ControlConfig):
        self.provider, self.mission, self.cfg = provider, mission, cfg
        self.h, z = cycle_schedule(cfg.glider, cfg.dt)
        self._z = z

    def _args(self, snap: SurfaceSnapshot):
        ru = np.asarray(eval_cubic(snap.ratio_u, self._z), dtype=float)
        rv = np.asarray(eval_cubic(snap.ratio_v, self._z), dtype=float)
        return ru, rv

    def batch(self, t: float, pos, phi: float, w1: float, w2: float, angles: NDArray,
              return_points: bool = False):
        snap = self.provider.snapshot(t)
        ru, rv = self._args(snap)
        m = self.mission
        r = self.cfg.region
        angles = np.ascontiguousarray(np.atleast_2d(angles), dtype=float)
        pts = np.zeros((len(angles), angles.shape[1], 2) if return_points else (0, 1, 2))
        vals = _rollout_kernel(angles, float(pos[0]), float(pos[1]), float(phi),
                               self.cfg.glider.v_h, self.h, ru, rv, snap.xs, snap.ys, snap.u, snap.v,
                               r.width_km, r.height_km, *m.line, float(m.target_km[0]),
                               float(m.target_km[1]), float(w1), float(w2), EXIT_PENALTY, pts)
        return (vals, pts) if return_points else vals


def rollout_reference(provider: CurrentProvider, mission: Mission, cfg: ControlConfig,
                      t: float, pos, phi: float, angles) -> NDArray | None:
    """
    Pure-Python rollout with ``simulate_cycle``; returns the predicted
    surfacings or None if the glider leaves the region.
    """
    snap = provider.snapshot(t)

    class Frozen:
        def velocity(self, _t, x, y, z):
            su, sv = snap.surface(x, y)
            return float(eval_cubic(snap.ratio_u, z)) * su, float(eval_cubic(snap.ratio_v, z)) * sv

    p = np.asarray(pos, float)
    out = []
    for a in angles:
        phi += a
        try:
            p, _ = simulate_cycle(p, phi, cfg.glider, Frozen(), cfg.dt, region=cfg.region)
        except ExitedRegion:
            return None
        out.append(p)
    return np.array(out)


def objective_reference(provider, mission, cfg, t, pos, phi, w1, w2, angles) -> float:
    pts = rollout_reference(provider, mission, cfg, t, pos, phi, angles)
    if pts is None:
        return EXIT_PENALTY
    return combine(w1, w2, f1(pts, mission.line), f2(pts, mission.target_km))


# --------------------------------------------------------------------------
# mission loop

@dataclass
class MissionResult:
    mission: LinePath
    optimizer: str
    completed: bool
    reason: str
    surfacings: NDArray              # (k, 2) km, start included as row 0
    track: NDArray                   # rows of (t, x, y, depth) in km
    headings: list
    weights: list                    # (w1, w2) after each update
    horizons: list
    c_values: list
    wall_times: list                 # optimizer seconds per surfacing
    deviations: tuple = (math.nan, math.nan, math.nan)
    region: Region = SURVEY_REGION
    meta: dict = field(default_factory=dict)

    @property
    def n_cycles(self) -> int:
        return len(self.surfacings) - 1

    def surfacings_lonlat(self) -> NDArray:
        return unproject(self.surfacings, self.region)

    def track_lonlat(self) -> NDArray:
        ll = unproject(self.track[:, 1:3], self.region)
        return np.column_stack([self.track[:, 0], ll, self.track[:, 3]])

    def summary(self) -> dict:
        return {"mission": self.mission.to_dict(), "optimizer": self.optimizer,
                "completed": self.completed, "reason": self.reason, "cycles": self.n_cycles,
                "deviation_km": dict(zip(("min", "mean", "max"), self.deviations)),
                "mean_wall_time_s": float(np.mean(self.wall_times)) if self.wall_times else 0.0,
                "max_wall_time_s": float(np.max(self.wall_times)) if self.wall_times else 0.0,
                "final_weights": list(self.weights[-1]) if self.weights else None, **self.meta}

    def fingerprint(self) -> bytes:
        """Byte string that changes with any numeric output; used for replay checks."""
        parts = [self.surfacings.tobytes(), self.track.tobytes(),
                 np.array(self.headings, float).tobytes(), np.array(self.weights, float).tobytes(),
                 np.array(self.horizons, float).tobytes(), np.array(self.c_values, float).tobytes(),
                 repr((self.completed, self.reason)).encode()]
        return b"".join(parts)


def deviation_stats(surfacings, line) -> tuple[float, float, float]:
    d = line_distance(surfacings, line)
    if d.size == 0:
        raise ValueError("no surfacings")
    return float(d.min()), float(d.mean()), float(d.max())


def _surfacing_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def run_mission(path: LinePath, cfg: ControlConfig, provider: CurrentProvider,
                truth: CurrentSource, optimizer: str | None = None,
                assert_invariants: bool = True) -> MissionResult:
    """
    Drive one glider from ``path.start`` to ``path.end``.

    ``provider`` (imputed current) is the only current the planner sees;
    ``truth`` is used only to advance the glider one cycle after each plan.
    """
    name = optimizer or cfg.optimizer
    g, region = cfg.glider, cfg.region
    mission = Mission(path, region)
    planner = Planner(provider, mission, cfg)
    delta = cfg.delta if cfg.delta is not None else travel_ratio(mission.length_km, g)
    lo = np.full(1, -cfg.turn_bound)

    dx, dy = mission.target_km - mission.start_km
    st = ControlState(0, sum(cfg.w1_bounds) / 2, sum(cfg.w2_bounds) / 2, cfg.H0,
                      math.degrees(math.atan2(dy, dx)), [mission.start_km.copy()])
    r_prev = 1.0
    t = 0.0
    track = [np.array([[0.0, *mission.start_km, 0.0]])]
    headings, weights, horizons, cs, walls = [], [], [], [], []
    completed, reason = False, "max_time"
    plan = np.zeros(0)

    while t + g.period <= cfg.max_time + 1e-6:
        pos = st.positions[-1]
        H = st.H
        w1, w2, phi = st.w1, st.w2, st.phi
        # seed the search with "keep heading" and the previous plan shifted by one cycle
        shifted = np.zeros(H)
        tail = plan[1:H + 1]
        shifted[:len(tail)] = tail
        problem = OptProblem(np.repeat(lo, H), np.repeat(-lo, H),
                             batch=lambda A: planner.batch(t, pos, phi, w1, w2, A),
                             x0=np.array([np.zeros(H), shifted]))
        ocfg = replace(cfg.opt, seed=_surfacing_seed(cfg.opt.seed, st.k), threads=1)
        t0 = time.perf_counter()
        res = minimize(name, problem, ocfg)
        walls.append(time.perf_counter() - t0)
        plan = res.x

        st.phi = phi + float(res.x[0])
        headings.append(st.phi)
        try:
            new_pos, rows = simulate_cycle(pos, st.phi, g, truth, cfg.dt, t0=t, region=region)
        except ExitedRegion as exc:
            reason = f"exited region at t={exc.t:.0f} s"
            break
        t += g.period
        track.append(rows[1:])
        st.positions.append(new_pos)
        st.k += 1

        r_now = mission.relative_distance(new_pos)
        if r_now * mission.length_km <= cfg.eta_km:
            completed, reason = True, "reached target"
            break
        st.w1, st.w2, c, dr = update_weights(st.w1, st.w2, r_prev, r_now, delta, cfg)
        st.H = update_horizon(st.H, st.w2, r_now, dr, cfg)
        r_prev = r_now
        weights.append((st.w1, st.w2))
        horizons.append(st.H)
        cs.append(c)
        if assert_invariants:
            assert cfg.w1_bounds[0] <= st.w1 <= cfg.w1_bounds[1]
            assert cfg.w2_bounds[0] <= st.w2 <= cfg.w2_bounds[1]
            assert cfg.c_min <= c <= cfg.c_max

    surf = np.array(st.positions)
    devs = deviation_stats(surf[1:], mission.line) if len(surf) > 1 else (0.0, 0.0, 0.0)
    return MissionResult(path, name, completed, reason, surf, np.vstack(track), headings,
                         weights, horizons, cs, walls, devs, region,
                         {"delta": delta, "length_km": mission.length_km})


def swirl_currents(params=None, days: int = 31, ratio=None):
    """
    True and imputed currents for the synthetic eddy: the truth is the
    translating eddy's daily 3D snapshots, the planner gets their surface
    layer with a ratio model fitted to the same history (or ``ratio``).
    """
    from .currents import GriddedCurrent, fit_ratio_model
    from .eddy import EddyParams, eddy_series

    snaps = eddy_series(params or EddyParams(), days)
    model = ratio if ratio is not None else fit_ratio_model(snaps)
    return GriddedCurrent(snaps), CurrentProvider.from_fields(snaps, model)
