import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from eddyglider.blocking import (BlockedModel, BlockFit, IdwModel, axis_intervals, block_weights,
                                 blocked_fit, blocked_predict, idw_predict, make_partition)
from eddyglider.geo import Dataset, OutsideRegion, Region
from eddyglider.tps import tps_fit

UNIT = Region(0.0, 1.0, 0.0, 1.0, 0.0, 1.0)


def smooth_data(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 3))
    return Dataset(X, np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1]) + X[:, 2] ** 2)


class Const:
    def __init__(self, v):
        self.v = v

    def __call__(self, x):
        return np.full(len(np.atleast_2d(x)), self.v)


class TestPartition:
    def test_three_intervals(self):
        np.testing.assert_allclose(axis_intervals(3, 0.25),
                                   [[0, 0.375], [0.29166667, 0.70833333], [0.625, 1]], atol=1e-8)

    @pytest.mark.parametrize("c", [0.0, 0.3, 0.9])
    def test_single(self, c):
        np.testing.assert_array_equal(axis_intervals(1, c), [[0.0, 1.0]])

    def test_count(self):
        assert make_partition(3, 2, 4).n_blocks == 24

    @pytest.mark.parametrize("c", [1.0, 1.5, -0.1])
    def test_bad_overlap(self, c):
        with pytest.raises(ValueError):
            make_partition(2, 2, 2, c)

    def test_bad_count(self):
        with pytest.raises(ValueError):
            make_partition(0, 1, 1)


class TestWeights:
    def test_single_cover(self):
        p = make_partition(3, 1, 1)
        w = block_weights(p, [0.1, 0.5, 0.5])
        np.testing.assert_array_equal(w, [1, 0, 0])

    def test_symmetric_overlap(self):
        p = make_partition(2, 1, 1)
        np.testing.assert_allclose(block_weights(p, [0.5, 0.5, 0.5]), [0.5, 0.5])

    def test_zero_on_other_boundary(self):
        # on the lower face of the second cuboid its weight vanishes
        p = make_partition(2, 2, 1)
        lo = p.intervals[0][1, 0]
        w = block_weights(p, [lo, 0.2, 0.5]).reshape(2, 2)
        assert w[1].sum() == 0.0 and w[0, 0] == pytest.approx(1.0)

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3),
           st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)),
           st.floats(0, 0.9))
    @settings(max_examples=200)
    def test_partition_of_unity(self, x, B, c):
        w = block_weights(make_partition(*B, c), x)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1) <= 1e-12

    def test_zero_outside(self):
        p = make_partition(3, 3, 3)
        x = np.random.default_rng(0).random((200, 3))
        W = block_weights(p, x)
        for b, ijk in enumerate(p.indices()):
            lo, hi = p.bounds(ijk)
            inside = np.all((x >= lo) & (x <= hi), axis=1)
            assert np.all(W[~inside, b] == 0)

    def test_outside_unit_cube(self):
        with pytest.raises(OutsideRegion):
            block_weights(make_partition(2, 2, 2), [1.2, 0.5, 0.5])


class TestBlockedFit:
    def test_single_block_equals_tps(self):
        d = smooth_data(150, 1)
        m = blocked_fit(d, make_partition(1, 1, 1), UNIT, lam=1e-4)
        ref = tps_fit(d, 1e-4)
        q = np.random.default_rng(2).random((100, 3))
        assert np.max(np.abs(m(q) - ref(q))) <= 1e-10

    def test_counts(self):
        rng = np.random.default_rng(0)
        d = Dataset(rng.random((2000, 3)), rng.random(2000))
        p = make_partition(2, 2, 2, 0.25)
        m = blocked_fit(d, p, UNIT, lam=1e-3)
        assert m.n_fitted == 8
        # each edge cuboid spans [0, (1 + c/2)/2] per axis
        expect = 2000 * 0.5625 ** 3
        for b in m.report:
            assert b.status == "ok"
            assert abs(b.n - expect) < 5 * np.sqrt(expect)

    def test_each_sample_in_every_covering_block(self):
        d = smooth_data(300, 3)
        p = make_partition(3, 2, 2, 0.3)
        m = blocked_fit(d, p, UNIT, lam=1e-3)
        for b, ijk in zip(m.report, p.indices()):
            lo, hi = p.bounds(ijk)
            assert b.n == int(np.all((d.X >= lo) & (d.X <= hi), axis=1).sum())

    def test_sparse_block_empty(self):
        rng = np.random.default_rng(4)
        X = np.vstack([rng.uniform(0, 0.4, (60, 3)) * [1, 2.5, 2.5], rng.uniform(0.7, 1, (3, 3))])
        X[:60, 0] = rng.uniform(0, 0.4, 60)
        d = Dataset(X, X.sum(1))
        m = blocked_fit(d, make_partition(2, 1, 1), UNIT, lam=1e-3)
        assert [b.status for b in m.report] == ["ok", "empty"]
        assert m.report[1].n == 3
        # points only covered by the empty block cannot be predicted
        with pytest.raises(OutsideRegion, match="lon="):
            m([[0.9, 0.5, 0.5]])
        assert np.isfinite(m([0.2, 0.5, 0.5]))

    def test_all_empty(self):
        d = smooth_data(4)
        with pytest.raises(ValueError, match="fewer than 5"):
            blocked_fit(d, make_partition(1, 1, 1), UNIT)

    def test_singular_block_recorded(self):
        rng = np.random.default_rng(5)
        left = rng.uniform(0, 0.4, (40, 3))
        right = np.column_stack([rng.uniform(0.7, 1, 20), rng.random(20), np.full(20, 0.5)])
        X = np.vstack([left, right])
        d = Dataset(X, X[:, 0])
        m = blocked_fit(d, make_partition(2, 1, 1), UNIT, lam=1e-3)
        assert [b.status for b in m.report] == ["ok", "singular"]
        assert "coplanar" in m.report[1].message

    def test_convex_combination(self):
        p = make_partition(2, 1, 1)
        u = brentq(lambda t: block_weights(p, [t, 0.5, 0.5])[0] - 0.25, 0.5, 0.625)
        np.testing.assert_allclose(block_weights(p, [u, 0.5, 0.5]), [0.25, 0.75])
        m = BlockedModel(p, UNIT, "tps", [Const(10.0), Const(20.0)],
                         [BlockFit((0, 0, 0), 9, "ok"), BlockFit((1, 0, 0), 9, "ok")])
        assert blocked_predict(m, [u, 0.5, 0.5]) == pytest.approx(17.5)
        assert blocked_predict(m, [0.1, 0.5, 0.5]) == 10.0

    def test_renormalise_over_fitted(self):
        p = make_partition(2, 1, 1)
        m = BlockedModel(p, UNIT, "tps", [Const(10.0), None],
                         [BlockFit((0, 0, 0), 9, "ok"), BlockFit((1, 0, 0), 2, "empty")])
        assert blocked_predict(m, [0.5, 0.5, 0.5]) == pytest.approx(10.0)

    def test_continuity(self):
        d = smooth_data(1500, 6)
        p = make_partition(3, 3, 3, 0.25)
        m = blocked_fit(d, p, UNIT, lam=1e-4)
        rng_y = np.ptp(d.y)
        delta = 1e-6
        rng = np.random.default_rng(7)
        for axis in range(3):
            for edge in np.unique(p.intervals[axis]):
                if edge in (0.0, 1.0):
                    continue
                x = rng.uniform(0.05, 0.95, (20, 3))
                x[:, axis] = edge
                a, b = x.copy(), x.copy()
                a[:, axis] -= delta
                b[:, axis] += delta
                assert np.max(np.abs(m(b) - m(a))) <= 1e-3 * rng_y

    def test_physical_region(self):
        region = Region(142.3, 145.2, 37.25, 39.15, 0.0, 830.0)
        rng = np.random.default_rng(8)
        X = region.lower + rng.random((400, 3)) * (region.upper - region.lower)
        d = Dataset(X, np.sin(X[:, 0]) + X[:, 2] / 830)
        m = blocked_fit(d, make_partition(2, 2, 2), region)
        assert np.sqrt(np.mean((m(X) - d.y) ** 2)) < 0.05
        assert len(m.report_dict()["blocks"]) == 8

    def test_threads_identical(self):
        d = smooth_data(600, 9)
        p = make_partition(2, 2, 2)
        q = np.random.default_rng(1).random((50, 3))
        a = blocked_fit(d, p, UNIT, threads=1)(q)
        b = blocked_fit(d, p, UNIT, threads=4)(q)
        np.testing.assert_array_equal(a, b)

    def test_idw_method(self):
        d = smooth_data(400, 10)
        m = blocked_fit(d, make_partition(2, 2, 2), UNIT, method="idw")
        np.testing.assert_allclose(m(d.X[:20]), d.y[:20], atol=1e-12)


class TestIdw:
    def test_exact_at_sample(self):
        d = smooth_data(30)
        assert idw_predict(d, d.X[7]) == d.y[7]

    def test_equidistant(self):
        d = Dataset(np.array([[0.0, 0, 0], [1.0, 0, 0]]), np.array([0.0, 4.0]))
        assert idw_predict(d, [0.5, 0.3, 0.0], k=None) == pytest.approx(2.0)

    def test_constant(self):
        rng = np.random.default_rng(0)
        d = Dataset(rng.random((50, 3)), np.full(50, 3.25))
        np.testing.assert_allclose(idw_predict(d, rng.random((20, 3))), 3.25)

    def test_brute_force(self):
        d = smooth_data(40, 2)
        x = np.array([0.3, 0.6, 0.2])
        r = np.linalg.norm(d.X - x, axis=1)
        w = r ** -5.0
        assert idw_predict(d, x, k=None) == pytest.approx(np.sum(w * d.y) / w.sum(), rel=1e-12)

    def test_large_power_nearest(self):
        d = smooth_data(40, 3)
        q = np.random.default_rng(4).random((25, 3))
        nn = d.y[np.argmin(np.linalg.norm(d.X[None] - q[:, None], axis=2), axis=1)]
        np.testing.assert_allclose(idw_predict(d, q, p=2000, k=None), nn, atol=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            idw_predict(Dataset(np.zeros((0, 3)), np.zeros(0)), [0, 0, 0])
        with pytest.raises(ValueError):
            idw_predict(smooth_data(5), [0, 0, 0], p=0)

    def test_model(self):
        d = smooth_data(30)
        np.testing.assert_array_equal(IdwModel(d)(d.X[:3]), d.y[:3])
