import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from pipscreen.priors import (ModelSpacePrior, ParamLayout, Params, PriorSpec, SpikeConfig,
                              log_prior_eta, slab_log_density, spike_log_density)


class TestSpike:
    def test_density_at_one(self):
        assert spike_log_density(1.0, 100.0) == pytest.approx(math.log(100.0), abs=1e-14)

    @pytest.mark.parametrize("rho", [0.01, 0.5, 1.0])
    def test_alpha_one_is_uniform(self, rho):
        assert spike_log_density(rho, 1.0) == 0.0

    def test_high_precision_value(self):
        mpmath.mp.dps = 40
        expected = float(mpmath.log(100 * mpmath.mpf("0.99") ** 99))
        assert spike_log_density(0.99, 100.0) == pytest.approx(expected, abs=1e-12)
        assert math.exp(expected) == pytest.approx(36.97, abs=0.01)

    @pytest.mark.parametrize("rho", [0.0, -0.5, 1.0001])
    def test_rejects_outside_unit_interval(self, rho):
        with pytest.raises(ValueError):
            spike_log_density(rho, 100.0)

    @pytest.mark.parametrize("alpha", [1.0, 50.0, 100.0, 200.0])
    def test_integrates_to_one(self, alpha):
        val, _ = integrate.quad(lambda r: math.exp(spike_log_density(r, alpha)), 0.0, 1.0,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
        assert abs(val - 1.0) < 1e-8

    @pytest.mark.parametrize("gamma", [0, 1])
    def test_mixture_component_is_proper(self, gamma):
        dens = (lambda r: math.exp(slab_log_density(r))) if gamma else (
            lambda r: math.exp(spike_log_density(r, 100.0)))
        val, _ = integrate.quad(dens, 0.0, 1.0, epsabs=1e-12, limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_per_input_alpha(self):
        np.testing.assert_array_equal(SpikeConfig(100.0).per_input(3), [100.0] * 3)
        np.testing.assert_array_equal(SpikeConfig((50.0, 200.0)).per_input(2), [50.0, 200.0])
        with pytest.raises(ValueError):
            SpikeConfig((50.0, 200.0)).per_input(3)
        with pytest.raises(ValueError):
            SpikeConfig(0.5)


class TestPriorEta:
    spec = PriorSpec(theta_bounds=((0.0, 1.0), (2.0, 6.0)))

    def test_matches_textbook_densities(self):
        s2_mode, s02_mode = 1.0 / 4.0, 0.02 / 5.0
        val = log_prior_eta([0.5, 4.0], s2_mode, s02_mode, self.spec)
        expected = (stats.invgamma(3.0, scale=1.0).logpdf(s2_mode)
                    + stats.invgamma(4.0, scale=0.02).logpdf(s02_mode) - math.log(4.0))
        assert val == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("theta", [[-0.1, 4.0], [0.5, 6.5]])
    def test_outside_bounds_is_minus_inf(self, theta):
        assert log_prior_eta(theta, 1.0, 0.1, self.spec) == -math.inf

    def test_nonpositive_variance_is_minus_inf(self):
        assert log_prior_eta([0.5, 4.0], 0.0, 0.1, self.spec) == -math.inf

    def test_unit_bounds_contribute_zero(self):
        spec = PriorSpec(theta_bounds=((0.0, 1.0),) * 3)
        base = log_prior_eta([], 0.7, 0.01, PriorSpec())
        assert log_prior_eta([0.2, 0.5, 0.9], 0.7, 0.01, spec) == pytest.approx(base, abs=1e-15)

    @pytest.mark.parametrize("bounds", [((0.0, math.inf),), ((1.0, 1.0),), ((2.0, 1.0),)])
    def test_rejects_unbounded_or_empty_support(self, bounds):
        with pytest.raises(ValueError):
            PriorSpec(theta_bounds=bounds)

    @pytest.mark.parametrize("field", ["sigma2_shape", "sigma2_rate", "sigma02_shape", "sigma02_rate"])
    def test_rejects_improper_inverse_gamma(self, field):
        with pytest.raises(ValueError):
            PriorSpec(**{field: 0.0})

    def test_medians(self):
        spec = PriorSpec()
        assert spec.sigma2_median() == pytest.approx(stats.invgamma(3, scale=1).ppf(0.5))
        assert spec.sigma02_median() == pytest.approx(stats.invgamma(4, scale=0.02).ppf(0.5))


class TestModelSpacePrior:
    def test_constant(self):
        prior = ModelSpacePrior()
        assert prior.is_constant
        np.testing.assert_array_equal(prior.log_prior(np.arange(8), 3), 0.0)
        assert ModelSpacePrior((0.5, 0.5)).is_constant

    def test_bernoulli(self):
        prior = ModelSpacePrior((0.2, 0.7))
        lp = prior.log_prior(np.arange(4), 2)
        expected = np.log([0.8 * 0.3, 0.2 * 0.3, 0.8 * 0.7, 0.2 * 0.7])
        np.testing.assert_allclose(lp, expected, rtol=1e-14)

    @pytest.mark.parametrize("tau", [0.0, 1.0, 1.5])
    def test_rejects_degenerate_tau(self, tau):
        with pytest.raises(ValueError):
            ModelSpacePrior((tau,))


class TestTransforms:
    def test_logit_half(self):
        layout = ParamLayout(1)
        u, _ = layout.to_unconstrained(Params(np.array([0.5]), 1.0, 1.0, np.empty(0)))
        np.testing.assert_array_equal(u, [0.0, 0.0, 0.0])
        back = layout.from_unconstrained(u)
        assert back.rho[0] == 0.5 and back.sigma2 == 1.0

    def test_inverse_logit_jacobian_at_zero(self):
        # d/du expit(u) = expit(u)(1 - expit(u)) = 1/4 at u = 0; log transforms contribute log 1 = 0
        assert ParamLayout(1).log_jacobian(np.zeros(3)) == pytest.approx(math.log(0.25), abs=1e-15)

    def test_jacobian_matches_finite_differences(self):
        layout = ParamLayout(2, ((0.0, 1.0), (-3.0, 5.0)))
        u = np.array([0.3, -1.2, 0.4, -2.0, 0.7, -0.5])

        def forward(v):
            prm = layout.from_unconstrained(v)
            return np.concatenate([prm.rho, [prm.sigma2, prm.sigma02], prm.theta])

        h = 1e-6
        J = np.column_stack([(forward(u + h * e) - forward(u - h * e)) / (2 * h) for e in np.eye(6)])
        assert layout.log_jacobian(u) == pytest.approx(math.log(abs(np.linalg.det(J))), abs=1e-7)

    def test_rejects_non_finite(self):
        layout = ParamLayout(1)
        with pytest.raises(ValueError):
            layout.from_unconstrained(np.array([np.nan, 0.0, 0.0]))
        with pytest.raises(ValueError):
            layout.to_unconstrained(Params(np.array([np.inf]), 1.0, 1.0, np.empty(0)))

    def test_roundtrip_random_points(self):
        rng = np.random.default_rng(12)
        layout = ParamLayout(3, ((0.0, 1.0), (10.0, 20.0)))
        for _ in range(1000):
            prm = Params(rng.uniform(1e-6, 1 - 1e-6, 3), rng.uniform(1e-3, 10), rng.uniform(1e-4, 1),
                         np.array([rng.uniform(1e-6, 1 - 1e-6), rng.uniform(10.001, 19.999)]))
            back = layout.from_unconstrained(layout.to_unconstrained(prm)[0])
            np.testing.assert_allclose(back.rho, prm.rho, rtol=1e-12)
            assert back.sigma2 == pytest.approx(prm.sigma2, rel=1e-12)
            assert back.sigma02 == pytest.approx(prm.sigma02, rel=1e-12)
            np.testing.assert_allclose(back.theta, prm.theta, rtol=1e-12)

    @given(st.lists(st.floats(-30, 30), min_size=4, max_size=4))
    def test_unconstrained_roundtrip_property(self, u):
        layout = ParamLayout(2)
        u = np.array(u)
        prm = layout.from_unconstrained(u)
        if np.any(prm.rho >= 1.0) or np.any(prm.rho <= 0.0):
            return  # saturated logit; the boundary itself is never proposed
        u2, _ = layout.to_unconstrained(prm)
        np.testing.assert_allclose(layout.from_unconstrained(u2).rho, prm.rho, rtol=1e-12)
        np.testing.assert_allclose(u2[2:], u[2:], rtol=1e-12, atol=1e-12)
