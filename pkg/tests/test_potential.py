import math
import warnings

import numpy as np
import pytest

from sparsespike.channel import mutual_information
from sparsespike.exceptions import DomainError, ParameterError
from sparsespike.potential import (
    Model,
    ScalingRegime,
    WignerSpec,
    WishartSpec,
    asymptotic_wigner_branch_values,
    asymptotic_wishart_branch_values,
    wigner_lambda,
    wigner_potential,
    wigner_potential_many,
    wigner_stationarity_residual,
    wishart_lambda,
    wishart_potential,
    wishart_stationary_qu,
)
from sparsespike.prior import bernoulli, bernoulli_rademacher, standard_gaussian


class TestScaling:
    def test_lambdas(self):
        assert wigner_lambda(1.0, math.exp(-1)) == pytest.approx(4 * math.e)
        assert wishart_lambda(1.0, math.exp(-1), 1.0) == pytest.approx(2 * math.sqrt(math.e))
        assert wishart_lambda(2.0, 0.1, 3.0) ** 2 == pytest.approx(4 * 2 * math.log(10) / 0.3)

    def test_regime_warns_outside_bound_range(self):
        with pytest.warns(UserWarning):
            ScalingRegime(0.2, 1.0, Model.WIGNER)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ScalingRegime(0.2, 1.0, Model.WISHART)
        r = ScalingRegime(0.1, 0.5)
        assert r.lam(1e-3) == pytest.approx(wigner_lambda(0.5, 1e-3))
        with pytest.raises(ParameterError):
            ScalingRegime(0.1, 0.5, "wishart").lam(1e-3)

    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            WignerSpec(bernoulli(0.1), 0.0)
        with pytest.raises(ParameterError):
            WignerSpec(bernoulli(0.1), 1.0, rho=0.2)
        with pytest.raises(ParameterError):
            WishartSpec(standard_gaussian(), bernoulli(0.1), 1.0, alpha=-1.0)


class TestWigner:
    def test_direct_formula(self):
        spec = WignerSpec(bernoulli(0.2), 7.0)
        q = 0.13
        expected = 7.0 / 4 * (q - 0.2) ** 2 + mutual_information(bernoulli(0.2), 7.0 * q)
        assert wigner_potential(spec, q) == pytest.approx(expected, rel=1e-14)

    def test_endpoints(self):
        spec = WignerSpec(bernoulli_rademacher(0.3), 5.0)
        assert wigner_potential(spec, 0.0) == pytest.approx(5.0 / 4 * 0.09)
        with pytest.raises(DomainError):
            wigner_potential(spec, 0.31)
        with pytest.raises(DomainError):
            wigner_potential(spec, -1e-12)

    @pytest.mark.parametrize("q", [0.01, 0.1, 0.25])
    def test_residual_is_derivative(self, q):
        spec = WignerSpec(bernoulli(0.3), 9.0)
        h = 1e-5
        fd = (wigner_potential(spec, q + h) - wigner_potential(spec, q - h)) / (2 * h)
        assert wigner_stationarity_residual(spec, q) == pytest.approx(fd, rel=1e-7)

    def test_vectorized(self):
        spec = WignerSpec(bernoulli(0.3), 9.0)
        qs = np.linspace(0, 0.3, 7)
        np.testing.assert_allclose(wigner_potential_many(spec, qs),
                                   [wigner_potential(spec, q) for q in qs], rtol=1e-13)

    @pytest.mark.parametrize("gamma", [0.3, 0.8, 1.5])
    def test_branch_values_leading_order(self, gamma):
        rho = 1e-12
        spec = WignerSpec.from_gamma(bernoulli(rho), gamma)
        low, high = asymptotic_wigner_branch_values(gamma, rho)
        # low branch near q ~ rho^2, high branch at q = rho
        assert wigner_potential(spec, rho ** 2) / low == pytest.approx(1.0, abs=0.01)
        assert wigner_potential(spec, rho) / high == pytest.approx(1.0, abs=0.05)

    def test_branch_formulas(self):
        s = 1e-3 * abs(math.log(1e-3))
        assert asymptotic_wigner_branch_values(0.4, 1e-3) == pytest.approx((0.4 * s, 0.8 * s))
        assert asymptotic_wigner_branch_values(2.0, 1e-3) == pytest.approx((2 * s, s))


class TestWishart:
    def test_direct_formula(self):
        pu, pv = standard_gaussian(), bernoulli_rademacher(0.2)
        spec = WishartSpec(pu, pv, 3.0, 2.0)
        qu, qv = 0.4, 0.1
        la = 6.0
        expected = la / 2 * (qu - 1) * (qv - 0.2) + 0.5 * math.log1p(la * qv) \
            + 2.0 * mutual_information(pv, 3.0 * qu)
        assert wishart_potential(spec, qu, qv) == pytest.approx(expected, rel=1e-14)

    def test_non_gaussian_u(self):
        spec = WishartSpec(bernoulli(0.5), bernoulli(0.2), 3.0, 1.0)
        expected = 1.5 * (0.2 - 0.5) * (0.1 - 0.2) + mutual_information(bernoulli(0.5), 0.3) \
            + mutual_information(bernoulli(0.2), 0.6)
        assert wishart_potential(spec, 0.2, 0.1) == pytest.approx(expected, rel=1e-13)

    def test_box(self):
        spec = WishartSpec(standard_gaussian(), bernoulli(0.2), 3.0, 1.0)
        with pytest.raises(DomainError):
            wishart_potential(spec, 1.1, 0.1)
        with pytest.raises(DomainError):
            wishart_potential(spec, 0.5, 0.3)

    @pytest.mark.parametrize("qv", [0.0, 0.05, 0.2])
    def test_gaussian_u_stationarity(self, qv):
        lam, alpha = 3.0, 2.0
        spec = WishartSpec(standard_gaussian(), bernoulli(0.2), lam, alpha)
        qu = wishart_stationary_qu(lam, alpha, qv)
        h = 1e-5
        f = lambda v: wishart_potential(spec, qu, v)  # noqa: E731
        if qv == 0.0:
            d = (-3 * f(0.0) + 4 * f(h) - f(2 * h)) / (2 * h)
        elif qv == 0.2:
            d = (3 * f(qv) - 4 * f(qv - h) + f(qv - 2 * h)) / (2 * h)
        else:
            d = (f(qv + h) - f(qv - h)) / (2 * h)
        assert d == pytest.approx(0.0, abs=1e-7)

    def test_branch_formulas(self):
        s = 1e-4 * abs(math.log(1e-4))
        low, high = asymptotic_wishart_branch_values(1.5, 1e-4, 2.0)
        assert low == pytest.approx(math.sqrt(3.0 * s))
        assert high == pytest.approx(low - 1.0 * s)
        low, high = asymptotic_wishart_branch_values(0.25, 1e-4, 2.0)
        assert high == pytest.approx(low + 0.5 * s)
