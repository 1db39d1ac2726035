import numpy as np
import pytest

from eddyglider.design import (DesignReport, Formation, InterpConfig, default_test_set, eval_design,
                               formation_lengths, gen_formation, pearson, rmse, select_best)
from eddyglider.eddy import synth_eddy
from eddyglider.geo import SURVEY_REGION, Dataset, GridSpec, project
from eddyglider.glider import GliderParams, LinePath

R = SURVEY_REGION


@pytest.fixture(scope="module")
def coarse_truth():
    return synth_eddy(spec=GridSpec(12, 10, (0.0, 100.0, 200.0, 400.0, 600.0, 800.0, 830.0)))[0]


class TestFormations:
    def test_parallel90_length(self):
        f = gen_formation("parallel90", 4, R)
        assert len(f.paths) == 4
        assert all(p.start[1] == R.lat_min and p.end[1] == R.lat_max for p in f.paths)
        assert f.length_km(R) == pytest.approx(845.0, abs=0.1)

    def test_parallel_length(self):
        assert gen_formation("parallel", 4, R).length_km(R) == pytest.approx(1027, rel=0.015)

    def test_parallel_insets(self):
        f = gen_formation("parallel", 4, R)
        span = R.lat_max - R.lat_min
        lats = [p.start[1] for p in f.paths]
        np.testing.assert_allclose(lats, [R.lat_min + (j - 0.5) * span / 4 for j in range(1, 5)])

    def test_cross_split(self):
        f = gen_formation("cross", 5, R)
        zonal = [p for p in f.paths if p.start[1] == p.end[1]]
        merid = [p for p in f.paths if p.start[0] == p.end[0]]
        assert (len(zonal), len(merid)) == (3, 2)

    @pytest.mark.parametrize("K", [2, 3, 6])
    def test_center_through_middle(self, K):
        f = gen_formation("center", K, R)
        assert len(f.paths) == K
        c = (R.lower[:2] + R.upper[:2]) / 2
        for p in f.paths:
            a, b = p.endpoints_km(R)
            m = (a + b) / 2
            np.testing.assert_allclose(m, project(c, R), atol=1e-9)
            assert R.contains_surface(np.array([p.start, p.end])).all()

    @pytest.mark.parametrize("K", [0, 1])
    def test_too_few(self, K):
        with pytest.raises(ValueError):
            gen_formation("parallel", K, R)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            gen_formation("spiral", 4, R)

    def test_relabel_invariance(self):
        f = gen_formation("cross", 6, R)
        perm = list(reversed(f.paths))
        total = sum(p.length_km(R) for p in perm)
        assert total == pytest.approx(f.length_km(R), rel=1e-14)

    def test_lengths_table(self):
        L = formation_lengths("parallel90", [4, 10], R)
        assert L[4] == pytest.approx(845.04, abs=0.01)
        assert L[10] == pytest.approx(2112.6, abs=0.1)


class TestMetrics:
    def test_rmse(self):
        assert rmse([1, 2, 3], [1, 2, 5]) == pytest.approx(np.sqrt(4 / 3))
        assert rmse(np.arange(5.0) + 1, np.arange(5.0)) == pytest.approx(1.0)
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_pearson(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)


def report(rmse_value, i=0, error=None):
    r = DesignReport("parallel", 4 + i, 100.0, rmse=rmse_value)
    r.error = error
    return r


class TestSelect:
    def test_argmin(self):
        reps = [report(0.3, 0), report(0.2, 1), report(0.5, 2)]
        assert select_best(reps) is reps[1]

    def test_single(self):
        r = report(0.4)
        assert select_best([r]) is r

    def test_tie_first(self):
        reps = [report(0.2, 0), report(0.2, 1)]
        assert select_best(reps) is reps[0]

    def test_failed_excluded(self):
        reps = [report(float("nan"), 0, "SingularSystem"), report(0.9, 1)]
        assert select_best(reps) is reps[1]
        with pytest.raises(ValueError):
            select_best([reps[0]])

    def test_scale_invariance(self):
        vals = [0.31, 0.12, 0.55, 0.12]
        a = select_best([report(v, i) for i, v in enumerate(vals)])
        b = select_best([report(7.3 * v, i) for i, v in enumerate(vals)])
        assert a.K == b.K


class TestEvalDesign:
    def test_parallel(self, coarse_truth):
        f = gen_formation("parallel", 4, R)
        cfg = InterpConfig(blocks=(3, 3, 10), lam=1e-4)
        rep = eval_design(f, coarse_truth, cfg)
        assert rep.ok and rep.n_samples > 0
        assert 0 < rep.rmse < 1.0 and rep.corr > 0.9
        assert rep.length_km == pytest.approx(f.length_km(R))

    def test_perfect_predictor(self, coarse_truth):
        test = default_test_set(coarse_truth, GliderParams())
        assert test.X[:, 2].max() <= 800.0
        assert rmse(coarse_truth(test.X), test.y) == 0.0

    def test_error_tagged(self, coarse_truth):
        # two copies of one short path: every sample is duplicated and coplanar
        path = LinePath((143.0, 38.0), (143.1, 38.0))
        f = Formation("parallel", 2, (path, path))
        cfg = InterpConfig(blocks=(1, 1, 1), lam=1e-4)
        rep = eval_design(f, coarse_truth, cfg)
        assert not rep.ok and "SingularSystem" in rep.error
        with pytest.raises(Exception, match="parallel K=2"):
            eval_design(f, coarse_truth, cfg, raise_errors=True)

    def test_empty_test(self, coarse_truth):
        with pytest.raises(ValueError):
            eval_design(gen_formation("parallel", 2, R), coarse_truth,
                        test=Dataset(np.zeros((0, 3)), np.zeros(0)))
