import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eddyglider.control import MISSIONS
from eddyglider.currents import UniformCurrent
from eddyglider.eddy import synth_eddy
from eddyglider.geo import SURVEY_REGION, project
from eddyglider.glider import (ExitedRegion, GliderParams, LinePath, depth_at, expected_cycles,
                               sample_line, simulate_cycle, travel_ratio)

G = GliderParams()
R = SURVEY_REGION


@pytest.fixture(scope="module")
def truth():
    return synth_eddy()[0]


class Vortex:
    """Smooth depth-dependent rotation about a point, m/s."""

    def velocity(self, t, x, y, depth):
        dx, dy = x - 120.0, y - 100.0
        s = 0.3 * math.exp(-(dx * dx + dy * dy) / 2500.0) * (1 - depth / 1600.0)
        return s * dy / 50.0, -s * dx / 50.0


class TestParams:
    def test_cycle_arithmetic(self):
        assert G.period == 8000.0
        assert G.run_per_cycle_km == pytest.approx(4.0)
        assert G.period / G.sample_dt == 160
        assert G.tan_beta == pytest.approx(0.4)

    def test_invalid(self):
        with pytest.raises(ValueError):
            GliderParams(v_h=0.0)

    def test_expected_cycles(self):
        assert expected_cycles(211.26, G) == pytest.approx(52.815, abs=1e-3)
        assert travel_ratio(211.26, G) == pytest.approx(9.47e-3, abs=5e-6)
        assert 2 * travel_ratio(211.26, G) == pytest.approx(1 / expected_cycles(211.26, G))
        with pytest.raises(ValueError):
            expected_cycles(0.0, G)

    def test_mission_three_cycles(self):
        path = MISSIONS[3]
        L = path.length_km(R)
        assert L == pytest.approx(200.142, abs=1e-3)
        assert math.ceil(L / G.run_per_cycle_km) == 51
        assert math.ceil(expected_cycles(L, G)) == 51

    def test_depth_wave(self):
        np.testing.assert_allclose(depth_at([0, 2000, 4000, 6000, 8000, 12000], G),
                                   [0, 400, 800, 400, 0, 800])

    def test_bad_path(self):
        with pytest.raises(ValueError):
            LinePath((143.0, 38.0), (143.0, 38.0))


class TestSampleLine:
    def test_counts_and_bounds(self, truth):
        path = LinePath((142.5, 38.0), (144.9, 38.0))
        d, tr = sample_line(path, G, truth)
        total = path.length_km(R) * 1000 / G.v_h
        assert len(d) == len(tr) == math.floor(total / G.sample_dt) + 1
        assert tr.depth.min() >= 0 and tr.depth.max() <= G.h_max
        assert np.all(np.diff(tr.t) > 0)
        assert tr.surfacings[:3] == [0, 160, 320]
        np.testing.assert_array_equal(d.y, truth(d.X))

    def test_stays_on_line(self, truth):
        path = LinePath((142.6, 37.4), (145.0, 39.0))
        d, tr = sample_line(path, G, truth)
        a, b = path.endpoints_km(R)
        xy = project(np.column_stack([tr.lon, tr.lat]), R)
        n = np.array([-(b - a)[1], (b - a)[0]]) / np.hypot(*(b - a))
        assert np.max(np.abs((xy - a) @ n)) <= 1e-9

    def test_outside(self, truth):
        with pytest.raises(ValueError):
            sample_line(LinePath((141.0, 38.0), (144.0, 38.0)), G, truth)


class TestSimulateCycle:
    def test_still_water_east(self):
        end, sub = simulate_cycle((10.0, 10.0), 0.0, G, UniformCurrent())
        np.testing.assert_allclose(end, (14.0, 10.0), atol=1e-12)
        assert len(sub) == 161
        assert sub[:, 3].max() == pytest.approx(800.0) and sub[-1, 3] == 0.0

    def test_uniform_drift(self):
        end, _ = simulate_cycle((10.0, 10.0), 0.0, G, UniformCurrent(0.1, 0.0))
        np.testing.assert_allclose(end, (14.8, 10.0), atol=1e-12)

    @given(st.floats(0, 360))
    @settings(max_examples=20)
    def test_cancellation(self, phi):
        r = math.radians(phi)
        cur = UniformCurrent(-0.5 * math.cos(r), -0.5 * math.sin(r))
        end, _ = simulate_cycle((50.0, 50.0), phi, G, cur)
        np.testing.assert_allclose(end, (50.0, 50.0), atol=1e-9)

    def test_first_order(self):
        start = (100.0, 90.0)
        ref, _ = simulate_cycle(start, 30.0, G, Vortex(), dt=50 / 64)
        errs = [np.linalg.norm(simulate_cycle(start, 30.0, G, Vortex(), dt=h)[0] - ref)
                for h in (50.0, 25.0)]
        assert 1.7 <= errs[0] / errs[1] <= 2.3

    def test_exit(self):
        with pytest.raises(ExitedRegion):
            simulate_cycle((1.0, 100.0), 180.0, G, UniformCurrent(), region=R)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            simulate_cycle((1.0, 1.0), 0.0, G, UniformCurrent(), dt=60.0)
