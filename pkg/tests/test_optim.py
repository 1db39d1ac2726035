import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eddyglider.optim import (OPTIMIZERS, EVOLUTIONARY_OPTIMIZERS, OptConfig, OptProblem, de_minimize,
                              depso_minimize, jde_minimize, minimize, reflect, samde_minimize)


def sphere(X):
    return np.sum(X ** 2, axis=1)


def rosenbrock(X):
    return np.sum(100 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1 - X[:, :-1]) ** 2, axis=1)


SPHERE10 = OptProblem.box(None, 10, -5, 5, batch=sphere)


def monotone(trace):
    best = [b for _, _, b in trace]
    return all(b <= a for a, b in zip(best, best[1:]))


def evals_to(res, threshold):
    for _, n, b in res.trace:
        if b < threshold:
            return n
    return np.inf


@pytest.mark.parametrize("name", EVOLUTIONARY_OPTIMIZERS)
def test_sphere_smoke(name):
    r = minimize(name, SPHERE10, OptConfig(max_evals=20_000, seed=1))
    assert r.fun < 1e-6
    assert r.nfev <= 20_000
    assert monotone(r.trace)
    assert r.fun == pytest.approx(float(sphere(r.x[None])[0]), abs=0)


@pytest.mark.parametrize("name", EVOLUTIONARY_OPTIMIZERS)
def test_constant_objective(name):
    p = OptProblem.box(lambda x: 3.5, 4, -1, 2)
    r = minimize(name, p, OptConfig(max_evals=400, seed=0))
    assert r.fun == 3.5
    assert np.all((r.x >= -1) & (r.x <= 2))


@pytest.mark.parametrize("name", EVOLUTIONARY_OPTIMIZERS)
def test_deterministic(name):
    cfg = OptConfig(max_evals=1500, seed=7)
    a, b = minimize(name, SPHERE10, cfg), minimize(name, SPHERE10, cfg)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.trace == b.trace


@pytest.mark.parametrize("name", EVOLUTIONARY_OPTIMIZERS)
def test_threads_do_not_change_results(name):
    p = OptProblem.box(lambda x: float(np.sum(x ** 2)), 6, -3, 3)
    a = minimize(name, p, OptConfig(max_evals=600, seed=2, threads=1))
    b = minimize(name, p, OptConfig(max_evals=600, seed=2, threads=3))
    assert a.trace == b.trace


@pytest.mark.parametrize("name", EVOLUTIONARY_OPTIMIZERS)
def test_bounds_and_budget(name):
    seen = []

    def batch(X):
        seen.append(X.copy())
        return rosenbrock(X)

    lo, hi = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 0.5, 9.0])
    p = OptProblem(lo, hi, batch=batch)
    r = minimize(name, p, OptConfig(max_evals=777, seed=3))
    X = np.vstack(seen)
    assert len(X) == r.nfev <= 777
    assert np.all(X >= lo) and np.all(X <= hi)
    assert monotone(r.trace)


@pytest.mark.parametrize("fn", [de_minimize, depso_minimize, samde_minimize])
def test_small_population(fn):
    with pytest.raises(ValueError):
        fn(SPHERE10, OptConfig(NP=3, max_evals=100))


def test_errors():
    with pytest.raises(ValueError):
        jde_minimize(SPHERE10, strategy=4)
    with pytest.raises(ValueError):
        samde_minimize(SPHERE10, OptConfig(subpops=1))
    with pytest.raises(ValueError):
        samde_minimize(SPHERE10, OptConfig(NP=10, subpops=3))
    with pytest.raises(ValueError, match="unknown optimizer"):
        minimize("cmaes", SPHERE10)
    with pytest.raises(ValueError):
        OptProblem(np.zeros(2), np.zeros(2), objective=lambda x: 0.0)
    with pytest.raises(ValueError):
        OptProblem(np.zeros(2), np.ones(2))
    with pytest.raises(KeyError):
        OptConfig.from_dict({"pop": 3})


def test_config_round_trip():
    cfg = OptConfig(NP=30, F=0.7, seed=5)
    assert OptConfig.from_dict(cfg.to_dict()) == cfg


@given(st.floats(-50, 50), st.floats(-3, 0), st.floats(0.1, 4))
@settings(max_examples=200)
def test_reflect(x, lo, w):
    hi = lo + w
    y = reflect(np.array([x]), np.array([lo]), np.array([hi]))[0]
    assert lo - 1e-12 <= y <= hi + 1e-12
    if lo <= x <= hi:
        assert y == pytest.approx(x)


def test_initial_guess_first():
    p = OptProblem.box(None, 3, -1, 1, batch=sphere, x0=[[0.0, 0.0, 0.0]])
    r = de_minimize(p, OptConfig(max_evals=20, NP=20))
    assert r.fun == 0.0


def test_jde_without_adaptation_is_de():
    cfg = OptConfig(max_evals=3000, seed=4, tau1=0.0, tau2=0.0)
    a = jde_minimize(SPHERE10, 3, cfg)
    b = de_minimize(SPHERE10, cfg)
    assert a.trace == b.trace
    np.testing.assert_array_equal(a.x, b.x)


def test_samde_without_migration_is_independent_jde():
    cfg = OptConfig(max_evals=3000, seed=11, migration_interval=None)
    r = samde_minimize(SPHERE10, cfg)
    island = OptConfig(NP=cfg.resolved(10).NP // 3, max_evals=1000, seed=11)
    kids = np.random.SeedSequence(11).spawn(3)
    runs = [jde_minimize(SPHERE10, 3, island, seed_seq=k) for k in kids]
    best = min(runs, key=lambda x: x.fun)
    assert r.fun == best.fun
    np.testing.assert_array_equal(r.x, best.x)


def test_depso_stationary():
    cfg = OptConfig(max_evals=2000, seed=5, inertia=0.0, cognitive=0.0, social=0.0, F=0.0)
    p = OptProblem.box(None, 10, -5, 5, batch=sphere)
    r = depso_minimize(p, cfg)
    X0 = p.initial(np.random.default_rng(5), cfg.resolved(10).NP)
    assert r.fun == sphere(X0).min()
    assert all(b == r.fun for _, _, b in r.trace)


def test_hold():
    r = OPTIMIZERS["hold"](OptProblem.box(None, 4, -1, 1, batch=sphere))
    np.testing.assert_array_equal(r.x, np.zeros(4))
    assert r.nfev == 1


@pytest.mark.slow
def test_rosenbrock_best1_faster_than_rand1():
    p = OptProblem.box(None, 5, -5, 5, batch=rosenbrock)
    med = {}
    for s in (1, 3):
        e = [evals_to(jde_minimize(p, s, OptConfig(max_evals=30_000, seed=k)), 1e-6)
             for k in range(20)]
        med[s] = np.median(e)
    assert med[1] < med[3]
