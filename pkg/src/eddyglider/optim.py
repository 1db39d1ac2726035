"""
Bounded derivative-free minimisers: DE, jDE (three mutation strategies),
an island-model SAMDE and a PSO/DE hybrid.

All algorithms are generation-synchronous: a whole generation of
candidates is produced from one seeded generator in a fixed draw order,
then evaluated as a batch.  The batch may be evaluated concurrently
without affecting the result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

JDE_STRATEGIES = {1: "best1", 2: "current_to_best1", 3: "rand1"}


@dataclass(frozen=True)
class OptProblem:
    lower: NDArray
    upper: NDArray
    objective: Callable[[NDArray], float] | None = None
    batch: Callable[[NDArray], NDArray] | None = None   # (m, dim) -> (m,)
    x0: NDArray | None = None     # (k, dim) guesses placed first in the initial population

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be matching 1-D arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ValueError("bounds must be finite with lower < upper")
        if self.objective is None and self.batch is None:
            raise ValueError("need an objective or a batch objective")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.x0 is not None:
            x0 = np.atleast_2d(np.asarray(self.x0, dtype=float))
            if x0.shape[1] != len(lo):
                raise ValueError("initial guesses must match the problem dimension")
            object.__setattr__(self, "x0", np.clip(x0, lo, hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def initial(self, rng: np.random.Generator, NP: int) -> NDArray:
        """Uniform random population with the initial guesses in its first rows."""
        X = self.lower + (self.upper - self.lower) * rng.random((NP, self.dim))
        if self.x0 is not None:
            k = min(len(self.x0), NP)
            X[:k] = self.x0[:k]
        return X

    @classmethod
    def box(cls, fn, dim: int, lo: float, hi: float, **kw) -> "OptProblem":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)), fn, **kw)


@dataclass(frozen=True)
class OptConfig:
    NP: int | None = None            # default max(20, 5 dim)
    F: float = 0.5
    CR: float = 0.9
    max_evals: int | None = None     # default 400 dim
    seed: int = 0
    tau1: float = 0.1
    tau2: float = 0.1
    subpops: int = 3
    migration_interval: int | None = 10   # None: never migrate
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    threads: int = 1

    def resolved(self, dim: int) -> "OptConfig":
        return replace(self, NP=self.NP or max(20, 5 * dim),
                       max_evals=self.max_evals or 400 * dim)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown optimizer option(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class OptResult:
    x: NDArray
    fun: float
    nfev: int
    nit: int
    seed: int
    algorithm: str
    trace: list = field(default_factory=list)    # (generation, nfev, best so far)

    def trace_csv(self) -> str:
        rows = ["generation,nfev,best"] + [f"{g},{n},{b!r}" for g, n, b in self.trace]
        return "\n".join(rows) + "\n"


def reflect(x: NDArray, lo: NDArray, hi: NDArray) -> NDArray:
    """Fold out-of-bounds components back into [lo, hi] by mirror reflection."""
    w = hi - lo
    y = np.mod(x - lo, 2 * w)
    return lo + np.where(y > w, 2 * w - y, y)


class _Evaluator:
    def __init__(self, p: OptProblem, budget: int, threads: int = 1):
        self.p, self.budget, self.threads = p, int(budget), int(threads)
        self.nfev = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.nfev

    def __call__(self, X: NDArray) -> NDArray:
        if len(X) > self.remaining:
            raise RuntimeError("evaluation budget exceeded")
        self.nfev += len(X)
        if len(X) == 0:
            return np.empty(0)
        if self.p.batch is not None:
            return np.asarray(self.p.batch(X), dtype=float).reshape(len(X))
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return np.fromiter(ex.map(self.p.objective, X), float, len(X))
        return np.array([float(self.p.objective(x)) for x in X])


def _distinct(rng: np.random.Generator, NP: int, k: int) -> NDArray:
    """(NP, k) random indices, distinct within a row and different from the row index."""
    out = np.empty((NP, k), dtype=np.int64)
    for i in range(NP):
        r = rng.choice(NP - 1, size=k, replace=False)
        out[i] = r + (r >= i)
    return out


class _DEPopulation:
    """One DE / jDE population that advances a generation per ``step``."""

    def __init__(self, p: OptProblem, cfg: OptConfig, rng, strategy: str, adaptive: bool,
                 ev: _Evaluator):
        if cfg.NP < 4:
            raise ValueError(f"population size must be >= 4, got {cfg.NP}")
        if ev.remaining < cfg.NP:
            raise ValueError(f"budget {ev.remaining} is smaller than the population {cfg.NP}")
        self.p, self.cfg, self.rng, self.ev = p, cfg, rng, ev
        self.strategy, self.adaptive = strategy, adaptive
        self.X = p.initial(rng, cfg.NP)
        self.f = ev(self.X)
        self.F = np.full(cfg.NP, cfg.F)
        self.CR = np.full(cfg.NP, cfg.CR)
        self.gen = 0
        self.trace = [(0, ev.nfev, self.best_f)]

    @property
    def best_i(self) -> int:
        return int(np.argmin(self.f))

    @property
    def best_f(self) -> float:
        return float(self.f.min())

    @property
    def done(self) -> bool:
        return self.ev.remaining <= 0

    def step(self) -> None:
        cfg, rng, NP, D = self.cfg, self.rng, self.cfg.NP, self.p.dim
        F, CR = self.F, self.CR
        if self.adaptive and (cfg.tau1 > 0 or cfg.tau2 > 0):
            r = rng.random((4, NP))
            F = np.where(r[0] < cfg.tau1, 0.1 + 0.9 * r[1], self.F)
            CR = np.where(r[2] < cfg.tau2, r[3], self.CR)
        idx = _distinct(rng, NP, 3)
        X, b = self.X, self.X[self.best_i]
        Fc = F[:, None]
        if self.strategy == "rand1":
            V = X[idx[:, 0]] + Fc * (X[idx[:, 1]] - X[idx[:, 2]])
        elif self.strategy == "best1":
            V = b + Fc * (X[idx[:, 0]] - X[idx[:, 1]])
        elif self.strategy == "current_to_best1":
            V = X + Fc * (b - X) + Fc * (X[idx[:, 0]] - X[idx[:, 1]])
        elif self.strategy == "current1":
            V = X + Fc * (X[idx[:, 0]] - X[idx[:, 1]])
        else:
            raise ValueError(f"unknown mutation strategy {self.strategy!r}")
        cross = rng.random((NP, D)) < CR[:, None]
        cross[np.arange(NP), rng.integers(0, D, NP)] = True
        U = reflect(np.where(cross, V, X), self.p.lower, self.p.upper)
        m = min(NP, self.ev.remaining)
        fu = self.ev(U[:m])
        better = np.zeros(NP, dtype=bool)
        better[:m] = fu <= self.f[:m]
        self.X[better] = U[:m][better[:m]]
        self.f[better] = fu[better[:m]]
        if self.adaptive:
            self.F[better], self.CR[better] = F[better], CR[better]
        self.gen += 1
        self.trace.append((self.gen, self.ev.nfev, self.best_f))

    def result(self, name: str, seed) -> OptResult:
        i = self.best_i
        return OptResult(self.X[i].copy(), float(self.f[i]), self.ev.nfev, self.gen,
                         seed, name, self.trace)


def _run(pop: _DEPopulation) -> _DEPopulation:
    while not pop.done:
        pop.step()
    return pop


def de_minimize(p: OptProblem, cfg: OptConfig = OptConfig()) -> OptResult:
    """DE/rand/1/bin with greedy selection and reflective bounds."""
    cfg = cfg.resolved(p.dim)
    rng = np.random.default_rng(cfg.seed)
    pop = _run(_DEPopulation(p, cfg, rng, "rand1", False, _Evaluator(p, cfg.max_evals, cfg.threads)))
    return pop.result("de", cfg.seed)


def jde_minimize(p: OptProblem, strategy: int = 1, cfg: OptConfig = OptConfig(),
                 seed_seq: np.random.SeedSequence | None = None) -> OptResult:
    """
    Self-adaptive DE: each individual carries (F, CR), resampled with
    probabilities tau1, tau2 and kept when the trial wins.  Strategy 1 uses
    best/1, 2 current-to-best/1, 3 rand/1.
    """
    if strategy not in JDE_STRATEGIES:
        raise ValueError(f"unknown jDE strategy {strategy}; expected 1, 2 or 3")
    cfg = cfg.resolved(p.dim)
    rng = np.random.default_rng(seed_seq if seed_seq is not None else cfg.seed)
    pop = _run(_DEPopulation(p, cfg, rng, JDE_STRATEGIES[strategy], True,
                             _Evaluator(p, cfg.max_evals, cfg.threads)))
    return pop.result(f"jde{strategy}", cfg.seed)


def samde_minimize(p: OptProblem, cfg: OptConfig = OptConfig(), strategy: int = 3) -> OptResult:
    """
    Island model of ``subpops`` jDE populations that split ``NP`` and the
    budget evenly.  Every ``migration_interval`` generations each island's
    best replaces the worst member of the next island on a ring.  Island
    ``s`` draws from the ``s``-th child of the seed sequence.
    """
    if cfg.subpops < 2:
        raise ValueError("SAMDE needs at least 2 sub-populations")
    if strategy not in JDE_STRATEGIES:
        raise ValueError(f"unknown jDE strategy {strategy}")
    cfg = cfg.resolved(p.dim)
    S = cfg.subpops
    island_cfg = replace(cfg, NP=cfg.NP // S, max_evals=cfg.max_evals // S)
    if island_cfg.NP < 4:
        raise ValueError(f"{S} islands leave {island_cfg.NP} individuals each; need >= 4")
    children = np.random.SeedSequence(cfg.seed).spawn(S)
    evs = [_Evaluator(p, island_cfg.max_evals, cfg.threads) for _ in range(S)]
    islands = [_DEPopulation(p, island_cfg, np.random.default_rng(children[s]),
                             JDE_STRATEGIES[strategy], True, evs[s]) for s in range(S)]
    trace = [(0, sum(e.nfev for e in evs), min(isl.best_f for isl in islands))]
    gen = 0
    while not all(isl.done for isl in islands):
        for isl in islands:
            if not isl.done:
                isl.step()
        gen += 1
        if cfg.migration_interval and gen % cfg.migration_interval == 0:
            emigrants = [(isl.X[isl.best_i].copy(), isl.best_f, isl.F[isl.best_i],
                          isl.CR[isl.best_i]) for isl in islands]
            for s, (x, fx, Fi, CRi) in enumerate(emigrants):
                dst = islands[(s + 1) % S]
                w = int(np.argmax(dst.f))
                if fx < dst.f[w]:
                    dst.X[w], dst.f[w], dst.F[w], dst.CR[w] = x, fx, Fi, CRi
        trace.append((gen, sum(e.nfev for e in evs), min(isl.best_f for isl in islands)))
    best = min(islands, key=lambda isl: isl.best_f)
    i = best.best_i
    return OptResult(best.X[i].copy(), float(best.f[i]), sum(e.nfev for e in evs), gen,
                     cfg.seed, "samde", trace)


def depso_minimize(p: OptProblem, cfg: OptConfig = OptConfig()) -> OptResult:
    """
    PSO and DE generations alternate.  Odd generations move the particles
    with the canonical inertia-weight update (velocity clamped to 20% of the
    range); even generations perturb each personal best with a scaled random
    difference of two other personal bests under binomial crossover and keep
    improvements.
    """
    cfg = cfg.resolved(p.dim)
    if cfg.NP < 4:
        raise ValueError(f"population size must be >= 4, got {cfg.NP}")
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(p, cfg.max_evals, cfg.threads)
    if ev.remaining < cfg.NP:
        raise ValueError(f"budget {ev.remaining} is smaller than the population {cfg.NP}")
    lo, hi, NP, D = p.lower, p.upper, cfg.NP, p.dim
    vmax = 0.2 * (hi - lo)
    X = p.initial(rng, NP)
    Vel = rng.uniform(-vmax, vmax, (NP, D))
    fx = ev(X)
    P, fp = X.copy(), fx.copy()
    gen = 0
    trace = [(0, ev.nfev, float(fp.min()))]
    while ev.remaining > 0:
        gen += 1
        m = min(NP, ev.remaining)
        g = P[int(np.argmin(fp))]
        if gen % 2 == 1:
            r1, r2 = rng.random((2, NP, D))
            Vel = cfg.inertia * Vel + cfg.cognitive * r1 * (P - X) + cfg.social * r2 * (g - X)
            Vel = np.clip(Vel, -vmax, vmax)
            X = reflect(X + Vel, lo, hi)
            f_new = ev(X[:m])
            imp = f_new <= fp[:m]
            P[:m][imp], fp[:m][imp] = X[:m][imp], f_new[imp]
        else:
            idx = _distinct(rng, NP, 2)
            T = P + cfg.F * (P[idx[:, 0]] - P[idx[:, 1]])
            cross = rng.random((NP, D)) < cfg.CR
            cross[np.arange(NP), rng.integers(0, D, NP)] = True
            T = reflect(np.where(cross, T, P), lo, hi)
            f_new = ev(T[:m])
            imp = f_new <= fp[:m]
            P[:m][imp], fp[:m][imp] = T[:m][imp], f_new[imp]
        trace.append((gen, ev.nfev, float(fp.min())))
    i = int(np.argmin(fp))
    return OptResult(P[i].copy(), float(fp[i]), ev.nfev, gen, cfg.seed, "depso", trace)


def hold_minimize(p: OptProblem, cfg: OptConfig = OptConfig()) -> OptResult:
    """Zero vector projected onto the box; one evaluation.  Baseline for tests."""
    x = np.clip(np.zeros(p.dim), p.lower, p.upper)
    f = float(_Evaluator(p, 1)(x[None])[0])
    return OptResult(x, f, 1, 0, cfg.seed, "hold", [(0, 1, f)])


OPTIMIZERS: dict[str, Callable[[OptProblem, OptConfig], OptResult]] = {
    "de": de_minimize,
    "jde1": lambda p, cfg=OptConfig(): jde_minimize(p, 1, cfg),
    "jde2": lambda p, cfg=OptConfig(): jde_minimize(p, 2, cfg),
    "jde3": lambda p, cfg=OptConfig(): jde_minimize(p, 3, cfg),
    "samde": samde_minimize,
    "depso": depso_minimize,
    "hold": hold_minimize,
}
EVOLUTIONARY_OPTIMIZERS = ("de", "jde1", "jde2", "jde3", "samde", "depso")


def minimize(name: str, p: OptProblem, cfg: OptConfig = OptConfig()) -> OptResult:
    try:
        fn = OPTIMIZERS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None
    return fn(p, cfg)
