import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from v2rgame import linkstate
from v2rgame.linkstate import InvalidModelError, RegionModel


def inverse_cdf_samples(d, size, seed, iters=60):
    """Oracle sampler: invert the position CDF by vectorized bisection."""
    u = np.random.default_rng(seed).random(size)
    lo, hi = np.zeros(size), np.full(size, float(d))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = linkstate.position_cdf(mid, d) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def empirical_regions(dist, radii):
    edges = np.append(radii, 0.0)[::-1]
    hist = np.histogram(dist, bins=edges)[0][::-1]
    return hist / hist.sum()


class TestPositionCdf:
    def test_endpoints(self):
        assert linkstate.position_cdf(1200, 1200) == pytest.approx(1.0, abs=1e-15)
        assert linkstate.position_cdf(-1e-9, 1200) == 0.0
        assert linkstate.position_cdf(0.0, 1200) == 0.0
        assert linkstate.position_cdf(2000, 1200) == 1.0

    def test_half(self):
        assert linkstate.position_cdf(600, 1200) == pytest.approx(0.5 * math.log(2) + 0.25,
                                                                   rel=1e-14)
        assert linkstate.position_cdf(600, 1200) == pytest.approx(0.59657, abs=1e-5)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert linkstate.position_cdf(hi * 900, 900) >= linkstate.position_cdf(lo * 900, 900)

    def test_continuous_near_zero(self):
        assert linkstate.position_cdf(1e-300, 1200) < 1e-300

    def test_requires_positive_length(self):
        with pytest.raises(ValueError):
            linkstate.position_cdf(1.0, 0.0)


class TestRegionProbabilities:
    def test_single_region(self):
        rp = linkstate.region_probabilities(RegionModel((1200,), [1.0], 1200))
        np.testing.assert_allclose(rp.p, [1.0])

    def test_two_regions(self):
        rp = linkstate.region_probabilities(RegionModel((1200, 600), [1.0, 2.0], 1200))
        assert rp.p[1] == pytest.approx(0.59657, abs=1e-5)
        assert rp.p[0] == pytest.approx(0.40343, abs=1e-5)

    @given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6, unique=True),
           st.floats(0.2, 1.0))
    def test_normalized(self, fracs, cover):
        d = 1500.0
        radii = sorted({round(f * cover * d, 6) for f in fracs}, reverse=True)
        rp = linkstate.region_probabilities(RegionModel(radii, np.ones(len(radii)), d))
        assert rp.p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(rp.p >= 0)
        assert rp.coverage == pytest.approx(linkstate.position_cdf(radii[0], d))

    def test_partial_coverage_renormalized(self):
        rp = linkstate.region_probabilities(RegionModel((600, 300), [1, 1], 1200))
        assert rp.coverage == pytest.approx(linkstate.position_cdf(600, 1200))
        raw = linkstate.position_cdf(600, 1200) - linkstate.position_cdf(300, 1200)
        assert rp.p[0] == pytest.approx(raw / rp.coverage)

    @pytest.mark.parametrize("radii", [(600, 600), (600, 900), (-1, -2), (1300, 600)])
    def test_invalid_radii(self, radii):
        with pytest.raises(InvalidModelError):
            RegionModel(radii, [1.0, 1.0], 1200)

    def test_rates_checked(self):
        with pytest.raises(InvalidModelError):
            RegionModel((1200, 600), [1.0, 0.0], 1200)
        with pytest.raises(InvalidModelError):
            RegionModel((1200, 600), [1.0, 2.0, 3.0], 1200)
        with pytest.warns(UserWarning):
            RegionModel((1200, 600), [2.0, 1.0], 1200)

    def test_against_inverse_cdf_sampling(self):
        radii = (1200, 700, 250)
        rp = linkstate.region_probabilities(RegionModel(radii, [1, 2, 3], 1200))
        emp = empirical_regions(inverse_cdf_samples(1200, 200_000, 3), radii)
        assert 0.5 * np.abs(emp - rp.p).sum() < 0.01


def test_product_sampler_has_position_law():
    """The library's sampler against the CDF (two-sided KS at 1%)."""
    dist = linkstate.sample_distances(1200, 50_000, seed=8)
    res = stats.kstest(dist, lambda x: linkstate.position_cdf(x, 1200))
    assert res.pvalue > 0.01


class TestPacketSuccess:
    def test_zero_demand(self):
        assert linkstate.packet_success_matrix_entry(3, 0, 0.5) == 0.0

    def test_single_term(self):
        assert linkstate.packet_success_matrix_entry(1, 1, 0.7) == pytest.approx(0.7)

    def test_enumeration(self):
        assert linkstate.packet_success_matrix_entry(2, 2, 0.5) == pytest.approx(0.6875)

    @given(st.integers(1, 6), st.integers(1, 5), st.floats(0.01, 0.99))
    def test_at_least_cf_successes(self, cf, u, ps):
        # the cf-th success by attempt cf*u <=> at least cf successes in cf*u trials
        oracle = stats.binom.sf(cf - 1, cf * u, ps)
        assert linkstate.packet_success_matrix_entry(cf, u, ps) == pytest.approx(oracle, rel=1e-9)

    def test_enumerated_trials(self):
        cf, u, ps = 2, 2, 0.3
        total = 0.0
        for outcome in product((0, 1), repeat=cf * u):
            if sum(outcome) >= cf:
                total += ps ** sum(outcome) * (1 - ps) ** (cf * u - sum(outcome))
        assert linkstate.packet_success_matrix_entry(cf, u, ps) == pytest.approx(total)

    @given(st.integers(1, 500), st.integers(1, 8), st.floats(0.0, 1.0))
    def test_is_probability(self, cf, u, ps):
        val = linkstate.packet_success_matrix_entry(cf, u, ps)
        assert 0.0 <= val <= 1.0 + 1e-12

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            linkstate.packet_success_matrix_entry(0, 1, 0.5)
        with pytest.raises(ValueError):
            linkstate.packet_success_matrix_entry(1, 1, 1.5)


class TestAverageRate:
    def test_unit_alpha(self):
        assert linkstate.average_rate([1, 0, 0], [5, 3, 2], [1, 1, 1]) == 5

    def test_uniform(self):
        assert linkstate.average_rate([0.25] * 4, [1, 2, 3, 4], [1] * 4) == pytest.approx(2.5)

    def test_hand_value(self):
        assert linkstate.average_rate([0.6, 0.4], [4, 2], [0.9, 0.8]) == pytest.approx(2.80)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            linkstate.average_rate([1.0], [1, 2], [1, 1])


class TestFrameTimePgf:
    kw = dict(rts=2.0, cts=1.5, sifs=0.5, ack=100.0)

    def test_at_one(self):
        p = np.array([0.3, 0.7])
        assert linkstate.frame_time_pgf(p, [100, 250], 8000, 1.0, **self.kw) == pytest.approx(
            1.0, abs=1e-12)

    def test_single_region_power(self):
        z = 0.9
        got = linkstate.frame_time_pgf([1.0], [200], 8000, z)
        assert got == pytest.approx(z ** 40)

    def test_derivative(self):
        p, rates = np.array([0.2, 0.5, 0.3]), np.array([50, 120, 300])
        h = 1e-6
        f = lambda z: linkstate.frame_time_pgf(p, rates, 8000, z, **self.kw)
        deriv = (f(1 + h) - f(1 - h)) / (2 * h)
        mean = linkstate.frame_time_mean(p, rates, 8000, **self.kw)
        assert deriv == pytest.approx(mean, rel=1e-7)
        assert mean == pytest.approx(2 + 1.5 + 1.5 + np.sum(p * 8100 / rates))

    def test_zero_rate(self):
        with pytest.raises(InvalidModelError):
            linkstate.frame_time_pgf([1.0], [0.0], 8000, 0.5)

    def test_collision_pgf(self):
        assert linkstate.collision_time_pgf(1.0, 2, 1, 1) == 1.0
        assert linkstate.collision_time_pgf(0.5, 2, 1, 1) == 0.5 ** 4
