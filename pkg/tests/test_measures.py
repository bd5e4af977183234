import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rankflow import (
    InitialProfile,
    JumpRateLaw,
    profile_tail_integral,
    sample_rates_and_positions,
)

LN2 = math.log(2.0)

TWO_ATOM = JumpRateLaw.from_atoms([(1.0, 0.5), (2.0, 0.5)])
DELTA1 = JumpRateLaw.delta(1.0)
GAMMA21 = JumpRateLaw.gamma(2.0, 1.0)
TWO_STRATA = InitialProfile(
    [(0.0, 0.5, JumpRateLaw.delta(1.0)), (0.5, 1.0, JumpRateLaw.delta(2.0))]
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


class TestLaplace:
    def test_point_mass_at_zero_time(self):
        assert DELTA1.laplace(0.0) == 1.0

    def test_two_atoms_closed_form(self):
        # 0.5 * 2^-1 + 0.5 * 2^-2
        assert TWO_ATOM.laplace(LN2) == pytest.approx(0.375, abs=1e-15)

    def test_two_atoms_against_monte_carlo(self):
        w = rng(123).choice([1.0, 2.0], size=10**6, p=[0.5, 0.5])
        mc = float(np.exp(-w * LN2).mean())
        assert TWO_ATOM.laplace(LN2) == pytest.approx(mc, abs=5e-4)

    def test_gamma_closed_form_and_quadrature(self):
        assert GAMMA21.laplace(1.0) == pytest.approx(0.25, abs=1e-14)
        quad, _ = integrate.quad(lambda x: math.exp(-x) * x * math.exp(-x), 0, np.inf)
        assert GAMMA21.laplace(1.0) == pytest.approx(quad, abs=1e-10)

    def test_vectorized_times(self):
        out = TWO_ATOM.laplace(np.array([0.0, LN2]))
        assert np.allclose(out, [1.0, 0.375])

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            TWO_ATOM.laplace(-0.1)
        with pytest.raises(ValueError):
            TWO_ATOM.laplace(np.array([0.5, -0.1]))


class TestWeightedLaplace:
    def test_point_mass_mean(self):
        assert DELTA1.weighted_laplace(0.0) == 1.0

    def test_two_atoms_closed_form(self):
        # 0.5 * 1 * 2^-1 + 0.5 * 2 * 2^-2
        assert TWO_ATOM.weighted_laplace(LN2) == pytest.approx(0.5, abs=1e-15)

    def test_gamma_mean(self):
        assert GAMMA21.weighted_laplace(0.0) == pytest.approx(2.0, abs=1e-14)
        quad, _ = integrate.quad(lambda x: x * x * math.exp(-x), 0, np.inf)
        assert GAMMA21.weighted_laplace(0.0) == pytest.approx(quad, abs=1e-9)

    def test_matches_laplace_derivative(self):
        mix = JumpRateLaw.mixture([(0.5, TWO_ATOM), (0.5, GAMMA21)])
        h = 1e-6
        for t in (0.1, 0.7, 2.0):
            fd = -(mix.laplace(t + h) - mix.laplace(t - h)) / (2 * h)
            assert fd == pytest.approx(mix.weighted_laplace(t), rel=1e-6)


class TestTestIntegral:
    def test_constant_function_is_laplace(self):
        mix = JumpRateLaw.mixture([(0.3, TWO_ATOM), (0.7, GAMMA21)])
        for t in (0.0, 0.5, 2.0):
            got = mix.test_integral(lambda w: np.ones_like(w), t)
            assert got == pytest.approx(mix.laplace(t), abs=1e-12)

    def test_second_moment_of_atoms(self):
        got = TWO_ATOM.test_integral(lambda w: w**2, 0.0)
        assert got == pytest.approx(2.5, abs=1e-14)
        w = rng(123).choice([1.0, 2.0], size=10**6, p=[0.5, 0.5])
        assert got == pytest.approx(float((w**2).mean()), abs=5e-3)

    def test_damped_identity_on_point_mass(self):
        got = DELTA1.test_integral(lambda w: w, 1.0)
        assert got == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_gamma_quadrature_against_scipy(self):
        got = GAMMA21.test_integral(lambda w: w**2, 0.7)
        quad, _ = integrate.quad(
            lambda x: x**2 * math.exp(-0.7 * x) * x * math.exp(-x), 0, np.inf
        )
        assert got == pytest.approx(quad, rel=1e-12)


class TestTilts:
    def test_exp_tilt_transform_identity(self):
        mix = JumpRateLaw.mixture([(0.4, TWO_ATOM), (0.6, GAMMA21)])
        for t, s in [(0.8, 0.6), (0.1, 2.0)]:
            tilted = mix.exp_tilt(t)
            assert tilted.laplace(s) == pytest.approx(
                mix.laplace(t + s) / mix.laplace(t), rel=1e-12
            )

    def test_size_biased_tilt_transform_identity(self):
        mix = JumpRateLaw.mixture([(0.4, TWO_ATOM), (0.6, GAMMA21)])
        for t, s in [(0.8, 0.6), (0.1, 2.0)]:
            tilted = mix.size_biased_exp_tilt(t)
            assert tilted.laplace(s) == pytest.approx(
                mix.weighted_laplace(t + s) / mix.weighted_laplace(t), rel=1e-12
            )

    def test_gamma_parameters_shift(self):
        tilted = GAMMA21.exp_tilt(0.5)
        assert tilted.gammas[0].shape == 2.0
        assert tilted.gammas[0].rate == 1.5
        biased = GAMMA21.size_biased_exp_tilt(0.5)
        assert biased.gammas[0].shape == 3.0
        assert biased.gammas[0].rate == 1.5


class TestLawValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            JumpRateLaw.from_atoms([(1.0, 0.6), (2.0, 0.6)])

    def test_zero_rate_rejected(self):
        with pytest.raises(ValueError):
            JumpRateLaw.from_atoms([(0.0, 1.0)])

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            JumpRateLaw.gamma(-1.0, 1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            JumpRateLaw()

    def test_mean_finite(self):
        mix = JumpRateLaw.mixture([(0.5, TWO_ATOM), (0.5, GAMMA21)])
        assert mix.mean() == pytest.approx(0.5 * 1.5 + 0.5 * 2.0)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0.05, 50.0, allow_nan=False),
            st.floats(0.01, 1.0, allow_nan=False),
        ),
        min_size=1,
        max_size=6,
    ),
    st.floats(0.01, 10.0),
)
def test_laplace_decreasing_and_bounded(pairs, t):
    total = sum(p for _, p in pairs)
    law = JumpRateLaw.from_atoms([(w, p / total) for w, p in pairs])
    assert law.laplace(0.0) == pytest.approx(1.0, abs=1e-12)
    a, b = law.laplace(t), law.laplace(t + 0.5)
    assert 0.0 < b < a <= 1.0
    assert math.isfinite(law.mean())


class TestProfile:
    def test_partition_validation(self):
        with pytest.raises(ValueError):
            InitialProfile([(0.0, 0.4, DELTA1), (0.5, 1.0, DELTA1)])
        with pytest.raises(ValueError):
            InitialProfile([(0.1, 1.0, DELTA1)])
        with pytest.raises(ValueError):
            InitialProfile([(0.0, 0.5, DELTA1)])
        with pytest.raises(ValueError):
            InitialProfile([])

    def test_law_at(self):
        assert TWO_STRATA.law_at(0.0).atom_rates[0] == 1.0
        assert TWO_STRATA.law_at(0.499).atom_rates[0] == 1.0
        assert TWO_STRATA.law_at(0.5).atom_rates[0] == 2.0
        with pytest.raises(ValueError):
            TWO_STRATA.law_at(1.0)

    def test_marginal_merges_atoms(self):
        marg = TWO_STRATA.marginal()
        assert np.allclose(marg.atom_rates, [1.0, 2.0])
        assert np.allclose(marg.atom_weights, [0.5, 0.5])
        assert TWO_STRATA.matches_marginal(TWO_ATOM)
        assert not TWO_STRATA.matches_marginal(DELTA1)

    def test_tail_integral_empty_interval(self):
        assert TWO_STRATA.tail_integral(1.0, 3.0) == 0.0

    def test_tail_integral_factorized_point_mass(self):
        prof = InitialProfile.factorized(DELTA1)
        assert profile_tail_integral(prof, 0.0, 1.0) == pytest.approx(
            math.exp(-1.0), abs=1e-15
        )

    def test_tail_integral_two_strata(self):
        # 0.5 * 2^-1 + 0.5 * 2^-2
        assert TWO_STRATA.tail_integral(0.0, LN2) == pytest.approx(0.375, abs=1e-15)
        # partial overlap of the first stratum only
        got = TWO_STRATA.tail_integral(0.25, LN2)
        assert got == pytest.approx(0.25 * 0.5 + 0.5 * 0.25, abs=1e-15)

    def test_tail_integral_matches_marginal_laplace(self):
        # whole-interval integral reduces to the marginal (Fubini)
        for t in (0.0, 0.3, 2.0):
            assert TWO_STRATA.tail_integral(0.0, t) == pytest.approx(
                TWO_STRATA.marginal().laplace(t), abs=1e-14
            )

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            TWO_STRATA.tail_integral(-0.1, 1.0)
        with pytest.raises(ValueError):
            TWO_STRATA.tail_integral(1.1, 1.0)


class TestSampling:
    def test_single_atom_deterministic(self):
        prof = InitialProfile.factorized(DELTA1)
        rates, ranks = sample_rates_and_positions(prof, 4, rng(5))
        assert np.all(rates == 1.0)
        assert sorted(ranks.tolist()) == [1, 2, 3, 4]

    def test_strata_deterministic_for_single_atoms(self):
        rates, _ = sample_rates_and_positions(TWO_STRATA, 100, rng(5))
        assert np.all(rates[:50] == 1.0)
        assert np.all(rates[50:] == 2.0)

    def test_mixture_fractions_concentrate(self):
        prof = InitialProfile.factorized(TWO_ATOM)
        rates, _ = sample_rates_and_positions(prof, 10**4, rng(7))
        frac = float((rates == 1.0).mean())
        assert abs(frac - 0.5) < 0.02  # 3 sigma is 0.015 for n = 1e4

    def test_deterministic_in_seed(self):
        prof = InitialProfile.factorized(TWO_ATOM)
        a, _ = sample_rates_and_positions(prof, 1000, rng(11))
        b, _ = sample_rates_and_positions(prof, 1000, rng(11))
        assert np.array_equal(a, b)

    def test_gamma_sampling_moment(self):
        prof = InitialProfile.factorized(GAMMA21)
        rates, _ = sample_rates_and_positions(prof, 10**4, rng(13))
        assert float(rates.mean()) == pytest.approx(2.0, abs=0.05)

    def test_rejects_empty_system(self):
        with pytest.raises(ValueError):
            sample_rates_and_positions(InitialProfile.factorized(DELTA1), 0, rng(1))
