import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2rgame import traffic
from v2rgame.traffic import VehicleClass


def poisson_counts(lam, x_min, d, size, seed, chunk=50_000):
    """Independent oracle: N(d) = #{n : Gamma_n <= d - n x_min}.

    ``Gamma_n`` are the arrival times of a rate-``lam`` Poisson process on
    ``[0, d]``, generated as a Poisson number of sorted uniforms, so no
    headways are ever summed.
    """
    rng = np.random.default_rng(seed)
    out = np.empty(size, dtype=np.int64)
    for start in range(0, size, chunk):
        m = min(chunk, size - start)
        k = rng.poisson(lam * d, m)
        width = max(int(k.max()), 1)
        u = np.sort(np.where(np.arange(width) < k[:, None], rng.random((m, width)) * d, np.inf),
                    axis=1)
        n = np.arange(1, width + 1)
        out[start:start + m] = (u <= d - n * x_min).sum(axis=1)
    return out


def erlang_cdf_series(lam, x_min, n, d):
    mu = lam * (d - n * x_min)
    if mu <= 0:
        return 0.0
    return 1.0 - sum(math.exp(-mu) * mu ** j / math.factorial(j) for j in range(n))


class TestHeadwayCdf:
    def test_zero_at_shift(self):
        assert traffic.headway_cdf(VehicleClass(0.03, 5), 5) == 0.0

    def test_limit_one(self):
        assert traffic.headway_cdf(VehicleClass(0.03, 5), 1e9) == 1.0

    def test_value(self):
        assert traffic.headway_cdf(VehicleClass(0.03, 5), 20) == pytest.approx(1 - math.exp(-0.45),
                                                                              rel=1e-14)
        assert traffic.headway_cdf(VehicleClass(0.03, 5), 20) == pytest.approx(0.36237, abs=1e-5)

    @given(st.floats(-50, 500), st.floats(0, 500))
    def test_nondecreasing(self, x, dx):
        cls = VehicleClass(0.03, 5)
        assert traffic.headway_cdf(cls, x + dx) >= traffic.headway_cdf(cls, x)


class TestNfoldCdf:
    def test_empty_sum(self):
        assert traffic.nfold_cdf(VehicleClass(0.03, 5), 0, 100) == 1.0

    def test_too_short(self):
        assert traffic.nfold_cdf(VehicleClass(0.03, 5), 3, 14) == 0.0

    def test_two_fold_tail(self):
        val = traffic.nfold_cdf(VehicleClass(0.03, 5), 2, 1200)
        expected_gap = math.exp(-35.7) * 36.7
        assert 1 - val == pytest.approx(expected_gap, rel=1e-3)

    @pytest.mark.parametrize("n", [1, 2, 5, 20, 60])
    @pytest.mark.parametrize("lam", [0.01, 0.03, 0.1])
    def test_matches_poisson_series(self, n, lam):
        got = traffic.nfold_cdf(VehicleClass(lam, 5), n, 1200)
        assert got == pytest.approx(erlang_cdf_series(lam, 5, n, 1200), abs=1e-12)

    def test_matches_monte_carlo_sums(self):
        rng = np.random.default_rng(4)
        cls = VehicleClass(0.03, 5)
        sums = (5 + rng.exponential(1 / 0.03, (200_000, 4))).sum(axis=1)
        for d in (100, 150, 200):
            assert traffic.nfold_cdf(cls, 4, d) == pytest.approx(np.mean(sums <= d), abs=4e-3)

    @given(st.integers(0, 80), st.floats(0, 1500), st.floats(0, 200))
    def test_monotone(self, n, d, dd):
        cls = VehicleClass(0.05, 5)
        assert traffic.nfold_cdf(cls, n + 1, d) <= traffic.nfold_cdf(cls, n, d) + 1e-15
        assert traffic.nfold_cdf(cls, n, d + dd) >= traffic.nfold_cdf(cls, n, d) - 1e-15


class TestCountPmf:
    def test_vanishing_density(self):
        pmf = traffic.count_pmf(VehicleClass(1e-12, 5), 1200)
        assert pmf[0] == pytest.approx(1.0, abs=1e-6)

    @given(st.floats(1e-4, 1.0), st.floats(1, 30), st.floats(50, 3000))
    def test_normalized(self, lam, x_min, d):
        pmf = traffic.count_pmf(VehicleClass(lam, x_min), d)
        assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all((pmf.probs >= 0) & (pmf.probs <= 1))

    def test_support(self):
        cls = VehicleClass(0.03, 5)
        pmf = traffic.count_pmf(cls, 1200)
        assert len(pmf) == cls.max_count(1200) == 240
        assert pmf[240] == 0.0 and pmf[1000] == 0.0

    @given(st.floats(1e-3, 0.3), st.floats(1.01, 3.0))
    def test_stochastic_ordering(self, lam, factor):
        lo = traffic.count_pmf(VehicleClass(lam, 5), 1200).mean
        hi = traffic.count_pmf(VehicleClass(lam * factor, 5), 1200).mean
        assert hi >= lo - 1e-9

    def test_against_poisson_oracle(self):
        cls = VehicleClass(0.03, 5)
        pmf = traffic.count_pmf(cls, 1200)
        emp = traffic.empirical_pmf(poisson_counts(0.03, 5, 1200, 200_000, seed=11), len(pmf))
        assert traffic.total_variation(pmf.probs, emp) < 0.02

    def test_pmf_at_rounds(self):
        pmf = traffic.count_pmf(VehicleClass(0.03, 5), 1200)
        assert pmf.at(30.6) == pmf[31]


class TestJointPmf:
    def test_single_class(self):
        cls = VehicleClass(0.03, 5)
        np.testing.assert_allclose(traffic.joint_count_pmf([cls], 1200).probs,
                                   traffic.count_pmf(cls, 1200).probs, atol=1e-15)

    def test_point_masses(self):
        cls = [VehicleClass(1e-12, 5), VehicleClass(1e-12, 5)]
        assert traffic.joint_count_pmf(cls, 1200)[0] == pytest.approx(1.0)

    def test_two_streams_monte_carlo(self):
        a, b = VehicleClass(0.05, 5), VehicleClass(0.03, 5)
        joint = traffic.joint_count_pmf([a, b], 1200)
        tot = poisson_counts(0.05, 5, 1200, 100_000, 1) + poisson_counts(0.03, 5, 1200, 100_000, 2)
        assert traffic.total_variation(joint.probs, traffic.empirical_pmf(tot, len(joint))) < 0.02

    def test_busy_mass_ratio_is_one(self):
        joint = traffic.joint_count_pmf([VehicleClass(0.001, 5), VehicleClass(0.002, 5)], 1200)
        assert traffic.busy_mass_ratio(joint) == pytest.approx(1.0, abs=1e-12)

    def test_empty_list(self):
        with pytest.raises(ValueError):
            traffic.joint_count_pmf([], 1200)


class TestSampling:
    def test_deterministic(self):
        cls = VehicleClass(0.03, 5)
        np.testing.assert_array_equal(traffic.sample_positions(cls, 1200, 1),
                                      traffic.sample_positions(cls, 1200, 1))

    def test_gaps(self):
        pos = traffic.sample_positions(VehicleClass(0.1, 5), 1200, 3)
        assert np.all(np.diff(np.concatenate([[0.0], pos])) >= 5)
        assert pos.max() <= 1200

    def test_mean_count(self):
        cls = VehicleClass(0.03, 5)
        counts = traffic.sample_counts(cls, 1200, 400_000, seed=5)
        assert counts.mean() == pytest.approx(traffic.count_pmf(cls, 1200).mean, rel=5e-3)


class TestVehicleClass:
    @pytest.mark.parametrize("kw", [{"lambda_": 0, "x_min": 5}, {"lambda_": 0.1, "x_min": 0},
                                    {"lambda_": 0.1, "x_min": 5, "omega": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            VehicleClass(**kw)

    def test_omega_must_fit(self):
        with pytest.raises(ValueError):
            VehicleClass(0.1, 5, omega=300).max_count(1200)

    def test_default_omega(self):
        assert VehicleClass(0.1, 7).max_count(1200) == 171
