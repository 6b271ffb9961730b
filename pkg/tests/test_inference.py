import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdid.data import PanelDataset
from distdid.ecdf import Grid, build_grid
from distdid.errors import ConfigError, DegenerateBootstrapError
from distdid.estimator import Estimator, EstimatorSpec
from distdid.identify import LinkRegime
from distdid.inference import (BootstrapPlan, Scheme, UniformBand, band_pipeline,
                               bootstrap_scale, draw_multipliers, rep_generator, resample,
                               run_bootstrap, sup_t_critical, sup_t_test, uniform_band,
                               unit_weights)

from conftest import make_staggered, make_two_period


def quiet_plan(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return BootstrapPlan(**kw)


class TestPlan:
    def test_warns_below_200(self):
        with pytest.warns(UserWarning, match="at least 200"):
            BootstrapPlan(B=50)

    def test_validation(self):
        with pytest.raises(ConfigError):
            BootstrapPlan(level=1.0)
        with pytest.raises(ConfigError):
            BootstrapPlan(B=-1)
        with pytest.raises(ConfigError):
            BootstrapPlan(scheme="wild")

    def test_scheme_names(self):
        assert Scheme.parse("empirical") is Scheme.NONPARAMETRIC
        assert Scheme.parse("Mammen").multiplier


class TestResample:
    def test_single_unit(self):
        d = PanelDataset.from_arrays(["a", "a"], [0, 1], [0, 0], [1.0, 2.0])
        r = resample(d, quiet_plan(B=1), 0)
        assert r.observations() == d.observations()

    def test_units_keep_all_periods(self, rng):
        d = make_staggered(rng, n_units=30)
        r = resample(d, quiet_plan(B=1, seed=3), 0)
        assert r.N == d.N
        assert r.presence().all()

    def test_rademacher_moments(self):
        xi = draw_multipliers(np.random.default_rng(0), Scheme.RADEMACHER, 200_000)
        assert set(np.unique(xi)) == {-1.0, 1.0}
        assert abs(xi.mean()) < 4 / np.sqrt(200_000)
        assert abs(xi.var() - 1) < 0.01

    @pytest.mark.parametrize("scheme", [Scheme.NORMAL, Scheme.MAMMEN])
    def test_multiplier_moments(self, scheme):
        xi = draw_multipliers(np.random.default_rng(1), scheme, 400_000)
        assert abs(xi.mean()) < 0.01 and abs(xi.var() - 1) < 0.02

    def test_multiplier_returns_weights(self):
        d = PanelDataset.from_arrays(["a", "b"], [0, 1], [0, 1], [1.0, 2.0])
        w = resample(d, quiet_plan(B=1, scheme="rademacher"), 0)
        assert w.shape == (2,) and set(w) <= {0.0, 2.0}

    def test_deterministic_streams(self):
        plan = quiet_plan(B=10, seed=42)
        a = unit_weights(50, plan, 7)
        b = unit_weights(50, plan, 7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, unit_weights(50, plan, 8))
        assert a.sum() == 50
        g1 = rep_generator(plan, 3).random(4)
        g2 = rep_generator(quiet_plan(B=10, seed=42, threads=4), 3).random(4)
        assert np.array_equal(g1, g2)


def gaussian_draws(rng, B=400, L=6):
    center = rng.normal(size=L) * 0.1
    return center, center + rng.normal(size=(B, L)) * np.linspace(0.5, 2.0, L)


class TestUniformBand:
    def test_degenerate_collapses(self):
        c = np.array([0.1, 0.4])
        band = uniform_band(c, np.tile(c, (50, 1)))
        assert band.critical_value == 0.0
        assert np.array_equal(band.lo, c) and np.array_equal(band.hi, c)

    def test_identical_draws_off_center(self):
        c = np.array([0.1, 0.4])
        with pytest.raises(DegenerateBootstrapError):
            uniform_band(c, np.tile(c + 0.1, (50, 1)))

    def test_single_draw_allowed(self):
        band = uniform_band(np.array([0.0]), np.array([[0.3]]))
        assert np.isfinite(band.critical_value)

    def test_gaussian_single_point(self):
        # sup-t over one point is |Z|; compare with an independent MC quantile
        rng = np.random.default_rng(7)
        sd = 0.3
        boot = rng.normal(size=(100_000, 1)) * sd
        band = uniform_band(np.zeros(1), boot, 0.90)
        oracle = np.quantile(np.abs(np.random.default_rng(8).normal(size=100_000)), 0.90)
        assert abs(band.critical_value - oracle) < 0.03
        assert abs(band.radius[0] - oracle * sd) < 0.03 * sd + 0.01 * sd

    def test_symmetric_before_truncation(self, rng):
        c, b = gaussian_draws(rng)
        band = uniform_band(c, b)
        assert np.max(np.abs((band.hi - band.center) - (band.center - band.lo))) < 1e-12

    def test_level_monotone(self, rng):
        c, b = gaussian_draws(rng)
        b90 = uniform_band(c, b, 0.90)
        b95 = uniform_band(c, b, 0.95)
        assert (b95.lo <= b90.lo).all() and (b95.hi >= b90.hi).all()

    def test_joint_no_narrower(self, rng):
        c1, b1 = gaussian_draws(rng)
        c2, b2 = gaussian_draws(rng)
        j1, j2 = uniform_band(c1, b1, joint_with=[(c2, b2)])
        m1, m2 = uniform_band(c1, b1), uniform_band(c2, b2)
        assert (j1.hi - j1.lo >= m1.hi - m1.lo - 1e-15).all()
        assert (j2.hi - j2.lo >= m2.hi - m2.lo - 1e-15).all()
        assert j1.contains(c1) and j2.contains(c2)

    def test_truncation_counts(self):
        band = UniformBand(np.array([0.05, 0.5]), np.array([-0.1, 0.4]), np.array([0.2, 1.2]),
                           0.9, 1.0, np.array([0.15, 0.7]))
        t = band.truncate()
        assert t.lo.tolist() == [0.0, 0.4] and t.hi.tolist() == [0.2, 1.0]
        assert t.truncated and t.n_truncated == 2

    def test_scale_floor(self):
        assert bootstrap_scale(np.ones((10, 2))).tolist() == [1e-10, 1e-10]

    def test_boundary_excludes_zero(self):
        band = UniformBand(np.array([0.5]), np.array([0.0]), np.array([1.0]), 0.9, 1.0,
                           np.array([0.5]))
        assert band.excludes_zero()
        zero = UniformBand(np.zeros(1), np.zeros(1), np.zeros(1), 0.9, 0.0, np.array([1e-10]))
        assert not zero.excludes_zero()


class TestSupTTest:
    def test_zero_never_rejects(self, rng):
        _, b = gaussian_draws(rng)
        assert not sup_t_test(np.zeros(6), b - b.mean(axis=0)).reject

    def test_large_effect_rejects(self, rng):
        c, b = gaussian_draws(rng)
        res = sup_t_test(c + 10, b + 10)
        assert res.reject and res.statistic > res.critical

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5), st.sampled_from([0.05, 0.1, 0.2]))
    def test_equivalent_to_band(self, seed, shift, alpha):
        r = np.random.default_rng(seed)
        c = r.normal(size=5) * shift
        b = c + r.normal(size=(60, 5))
        band = uniform_band(c, b, 1 - alpha)
        assert sup_t_test(c, b, alpha).reject == band.excludes_zero()

    def test_critical_is_inverted_cdf(self):
        b = np.arange(10, dtype=float)[:, None]
        crit, (s,) = sup_t_critical([np.zeros(1)], [b], 0.9)
        # t* = k / s; the 0.9 inverted-cdf quantile of 10 values is the 9th
        assert crit == pytest.approx(8 / s[0])


class TestBootstrap:
    def test_threads_bit_identical(self, rng):
        d = make_two_period(rng, n=300)
        est = Estimator(d, build_grid(d, "simulation"), EstimatorSpec())
        a = run_bootstrap(est, quiet_plan(B=150, seed=5, threads=1))
        b = run_bootstrap(est, quiet_plan(B=150, seed=5, threads=3))
        assert np.array_equal(a.dtt, b.dtt) and np.array_equal(a.cf, b.cf)

    def test_redraw_on_empty_cell(self):
        # one treated pre unit: many replications lose it and must be redrawn
        y = [0.0, 1.0, 0.0, 1.0, 0.5, 0.0, 1.0]
        d = PanelDataset.from_arrays(range(7), [0, 0, 1, 1, 0, 1, 1], [0, 0, 0, 0, 1, 1, 1], y)
        est = Estimator(d, Grid([0.0, 0.5]), EstimatorSpec())
        with pytest.raises(DegenerateBootstrapError):
            run_bootstrap(est, quiet_plan(B=50, seed=1))

    def test_multiplier_scheme_runs(self, rng):
        d = make_two_period(rng, n=300)
        est = Estimator(d, build_grid(d, "simulation"), EstimatorSpec())
        dr = run_bootstrap(est, quiet_plan(B=80, seed=5, scheme="mammen"))
        assert dr.cf.shape == (80, len(est.grid))
        assert (dr.cf >= 0).all() and (dr.cf <= 1).all()


class TestPipeline:
    def test_one_unit_per_cell(self):
        d = PanelDataset.from_arrays(range(4), [0, 1, 0, 1], [0, 0, 1, 1], [1.0, 1.0, 0.0, 2.0])
        spec = EstimatorSpec(LinkRegime.uniform("identity"))
        # any non-degenerate resample is a permutation of the four units
        seed = next(s for s in range(1000)
                    if (unit_weights(4, quiet_plan(B=1, seed=s), 0) == 1).all())
        res = band_pipeline(d, spec, Grid([0.0, 1.0, 2.0]), quiet_plan(B=1, seed=seed))
        assert res.diagnostics["degenerate_replications"] == 0
        for band in (res.treated_band, res.cf_band, res.dtt_band):
            assert np.allclose(band.lo, band.center) and np.allclose(band.hi, band.center)

    def test_treated_equals_control(self, rng):
        n = 200
        y0 = np.round(rng.normal(size=n), 1)
        y1 = np.round(rng.normal(size=n), 1)
        y = np.r_[y0, y1, y0, y1]
        t = np.r_[np.zeros(n), np.ones(n), np.zeros(n), np.ones(n)].astype(int)
        g = np.r_[np.zeros(2 * n), np.ones(2 * n)]
        d = PanelDataset.from_arrays(range(4 * n), t, g, y)
        grid = build_grid(d, "simulation")
        res = band_pipeline(d, EstimatorSpec(), grid, quiet_plan(B=199, seed=2))
        assert np.max(np.abs(res.point.dtt.values)) < 1e-12
        assert res.qtt_intervals.contains(np.zeros(len(res.taus))).all()
        assert not res.dtt_test.reject

    def test_staggered_pipeline(self, rng):
        d = make_staggered(rng, n_units=80, groups=(1, 3, np.inf))
        grid = Grid([-1.0, 0.0, 0.5, 1.0], 10.0)
        spec = EstimatorSpec(aggregate="event:0")
        res = band_pipeline(d, spec, grid, quiet_plan(B=99, seed=4))
        assert res.dtt_band.contains(res.point.dtt.values)
        assert res.diagnostics["degenerate_replications"] >= 0
