import itertools
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from sparsespike.channel import mutual_information
from sparsespike.exceptions import ParameterError, ResourceError
from sparsespike.oracle import (
    InterpolationState,
    adaptive_ode_solve,
    boundary_values_check,
    epsilon_sensitivity,
    exact_posterior,
    jackknife,
    mutual_information_mc,
    nishimori_check,
    overlap_fluctuation,
    posterior_batch,
    sample_batch,
    sample_instance,
    sum_rule_check,
)
from sparsespike.prior import bernoulli, bernoulli_rademacher, moments, standard_gaussian


def naive_posterior(inst, t=0.0, R=0.0):
    """Loop over itertools.product and weigh each configuration by P0(x) exp(-H(x))."""
    n = inst.n
    s = math.sqrt((1 - t) * inst.lam / n)
    w = s * np.outer(inst.signal, inst.signal) + inst.noise
    y = math.sqrt(R) * inst.signal + inst.scalar_noise
    logws, confs = [], []
    for combo in itertools.product(range(len(inst.prior.atoms)), repeat=n):
        x = inst.prior.values[list(combo)]
        h = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                h += s * s * x[i] ** 2 * x[j] ** 2 / 2 - s * x[i] * x[j] * w[i, j]
        h += R * np.dot(x, x) / 2 - math.sqrt(R) * np.dot(x, y)
        logws.append(sum(math.log(inst.prior.weights[c]) for c in combo) - h)
        confs.append(x)
    logws = np.array(logws)
    m = logws.max()
    p = np.exp(logws - m)
    z = p.sum()
    p /= z
    confs = np.array(confs)
    q = confs @ inst.signal / n
    return {"log_z": m + math.log(z), "q1": p @ q, "q2": p @ q ** 2, "mean": p @ confs, "p": p}


class TestInstances:
    def test_determinism(self):
        a = sample_instance(5, bernoulli(0.3), 2.0, seed=11, index=3)
        b = sample_instance(5, bernoulli(0.3), 2.0, seed=11, index=3)
        for f in ("signal", "noise", "scalar_noise", "data"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
        c = sample_instance(5, bernoulli(0.3), 2.0, seed=11, index=4)
        assert not np.array_equal(a.noise, c.noise)

    def test_data_reconstruction(self):
        inst = sample_instance(6, bernoulli_rademacher(0.5), 3.0, seed=1)
        expected = math.sqrt(3.0 / 6) * np.outer(inst.signal, inst.signal) + inst.noise
        iu = np.triu_indices(6, 1)
        np.testing.assert_array_equal(inst.data[iu], expected[iu])
        np.testing.assert_array_equal(inst.data, inst.data.T)
        assert np.all(np.diag(inst.data) == 0)
        assert set(inst.signal) <= {-1.0, 0.0, 1.0}

    def test_zero_lambda_data_is_noise(self):
        inst = sample_instance(4, bernoulli(0.5), 0.0, seed=2)
        np.testing.assert_array_equal(inst.data, inst.noise)

    def test_single_variable_has_no_pairs(self):
        inst = sample_instance(1, bernoulli(0.5), 1.0, seed=2)
        assert inst.data[np.triu_indices(1, 1)].size == 0

    def test_gaussian_prior_rejected(self):
        with pytest.raises(ParameterError):
            sample_instance(3, standard_gaussian(), 1.0, seed=0)

    def test_interpolation_state_validation(self):
        with pytest.raises(ParameterError):
            InterpolationState(0.5, 0.3, 0.1, 0.4)
        with pytest.raises(ParameterError):
            InterpolationState(0.5, 0.1, 0.1, 0.05)
        st = InterpolationState.constant_path(0.5, 0.1, 0.1, 2.0, 0.2)
        assert st.R == pytest.approx(0.3)


class TestExactPosterior:
    @pytest.mark.parametrize("prior,t,R", [
        (bernoulli(0.4), 0.0, 0.0), (bernoulli_rademacher(0.5), 0.3, 0.7), (bernoulli(0.2), 1.0, 1.5),
    ])
    def test_matches_naive_enumeration(self, prior, t, R):
        inst = sample_instance(4, prior, 3.0, seed=5)
        ref = naive_posterior(inst, t, R)
        interp = None if t == 0 and R == 0 else InterpolationState(t, 0.1, 0.1, max(R, 0.1))
        if interp is not None:
            ref = naive_posterior(inst, t, interp.R)
        got = exact_posterior(inst, interp, keep_probs=True)
        assert got.free_energy == pytest.approx(-ref["log_z"] / 4, rel=1e-12)
        assert got.mean_overlap == pytest.approx(ref["q1"], rel=1e-12)
        assert got.mean_overlap_sq == pytest.approx(ref["q2"], rel=1e-12)
        np.testing.assert_allclose(got.posterior_mean, ref["mean"], rtol=1e-12)
        np.testing.assert_allclose(got.per_config_posterior, ref["p"], rtol=1e-11, atol=1e-300)

    def test_probabilities_sum_to_one(self):
        for seed in range(5):
            inst = sample_instance(7, bernoulli_rademacher(0.3), 20.0, seed=seed)
            p = exact_posterior(inst, keep_probs=True).per_config_posterior
            assert abs(p.sum() - 1.0) <= 1e-10

    def test_zero_lambda_is_prior(self):
        inst = sample_instance(5, bernoulli(0.3), 0.0, seed=4)
        post = exact_posterior(inst)
        np.testing.assert_allclose(post.posterior_mean, 0.3, rtol=1e-12)
        assert post.mean_overlap == pytest.approx(0.3 * inst.signal.mean(), rel=1e-12)
        assert post.free_energy == pytest.approx(0.0, abs=1e-15)

    def test_zero_lambda_disorder_average(self):
        stats = posterior_batch(sample_batch(5, bernoulli(0.3), 0.0, 4000, seed=8))
        assert stats.q1.mean() == pytest.approx(0.09, abs=3 * stats.q1.std() / math.sqrt(4000))

    def test_strong_signal_recovers(self):
        # a signal with fewer than two nonzero entries leaves every product
        # X_i X_j at zero, so only those instances keep a vector error
        for s in range(20):
            inst = sample_instance(6, bernoulli(0.5), 1e3, seed=s)
            post = exact_posterior(inst)
            assert post.matrix_mmse_offdiag <= 1e-3
            if np.count_nonzero(inst.signal) >= 2:
                assert post.vector_mmse <= 1e-3

    def test_budget(self):
        inst = sample_instance(17, bernoulli_rademacher(0.5), 1.0, seed=0)
        with pytest.raises(ResourceError, match="1e\\+08"):
            exact_posterior(inst)

    def test_two_variables_closed_form(self):
        # n=2, Ber(1/2): only (1,1) has a non-trivial likelihood factor
        lam, w12 = 3.0, 0.8
        inst = sample_instance(2, bernoulli(0.5), lam, seed=0)
        noise = np.array([[0.0, w12], [w12, 0.0]]) - math.sqrt(lam / 2) * np.outer(inst.signal, inst.signal)
        object.__setattr__(inst, "noise", noise)
        s = math.sqrt(lam / 2)
        a = math.exp(s * w12 - s * s / 2)
        p11 = a / (3 + a)
        p_other = 1 / (3 + a)
        x1, x2 = inst.signal
        q_expected = p11 * (x1 + x2) / 2 + p_other * (x1 / 2 + x2 / 2)
        assert exact_posterior(inst).mean_overlap == pytest.approx(q_expected, rel=1e-13)

    def test_two_variables_disorder_average(self):
        lam = 3.0
        s = math.sqrt(lam / 2)

        def mean_q(x1, x2):
            def integrand(z):
                a = math.exp(s * (s * x1 * x2 + z) - s * s / 2)
                return norm.pdf(z) * (a * (x1 + x2) / 2 + (x1 + x2) / 2) / (3 + a)
            return integrate.quad(integrand, -12, 12, epsabs=1e-13)[0]

        ref = sum(0.25 * mean_q(x1, x2) for x1 in (0, 1) for x2 in (0, 1))
        stats = posterior_batch(sample_batch(2, bernoulli(0.5), lam, 20000, seed=3))
        err = stats.q1.std() / math.sqrt(20000)
        assert abs(stats.q1.mean() - ref) <= 3 * err


class TestMutualInformation:
    def test_single_variable_is_zero(self):
        assert mutual_information_mc(1, bernoulli(0.3), 5.0, 10, seed=0) == (0.0, 0.0)

    def test_zero_lambda(self):
        est = mutual_information_mc(5, bernoulli(0.3), 0.0, 50, seed=0)
        assert abs(est.value) <= 3 * est.std_err + 1e-15

    def test_two_variables_reduce_to_scalar_channel(self):
        # W_12 only sees X_1 X_2 ~ Ber(1/4) at SNR lam/2
        lam = 4.0
        est = mutual_information_mc(2, bernoulli(0.5), lam, 20000, seed=1)
        ref = mutual_information(bernoulli(0.25), lam / 2) / 2
        assert abs(est.value - ref) <= 3 * est.std_err

    def test_i_mmse_finite_n(self):
        # d(I/n)/d lam = (1/4n^2) sum_{i != j} E(X_i X_j - <x_i x_j>)^2
        n, prior, lam, h, nd = 4, bernoulli(0.4), 3.0, 0.05, 6000
        _, m2, _ = moments(prior)

        def per_instance(l):
            batch = sample_batch(n, prior, l, nd, seed=9)
            st = posterior_batch(batch)
            return -st.log_z / n + (n - 1) / n * m2 ** 2 * l / 4, batch, st

        up, _, _ = per_instance(lam + h)
        dn, _, _ = per_instance(lam - h)
        _, batch, st = per_instance(lam)
        diffs = [np.outer(b.signal, b.signal) - st.second_x[i] for i, b in enumerate(batch)]
        mm = np.array([np.sum(D ** 2) - np.sum(np.diag(D) ** 2) for D in diffs]) / n ** 2
        d = (up - dn) / (2 * h) - mm / 4
        assert abs(d.mean()) <= 3 * d.std() / math.sqrt(nd)

    def test_validation(self):
        with pytest.raises(ParameterError):
            mutual_information_mc(3, bernoulli(0.3), 1.0, 1, seed=0)
        with pytest.raises(ResourceError):
            mutual_information_mc(30, bernoulli(0.3), 1.0, 2, seed=0)


class TestNishimori:
    @pytest.mark.parametrize("n,prior,lam", [(5, bernoulli(0.4), 2.0), (4, bernoulli_rademacher(0.5), 6.0)])
    def test_holds_on_average(self, n, prior, lam):
        res = nishimori_check(sample_batch(n, prior, lam, 2000, seed=4))
        assert res.violation <= 3 * res.std_err

    def test_not_pointwise(self):
        batch = sample_batch(5, bernoulli(0.4), 2.0, 20, seed=4)
        diffs = []
        for inst in batch:
            m = exact_posterior(inst).posterior_mean
            diffs.append(m @ m - inst.signal @ m)
        assert max(abs(d) for d in diffs) > 1e-3

    def test_interpolating_model(self):
        st = InterpolationState.constant_path(0.5, 0.1, 0.1, 3.0, 0.2)
        res = nishimori_check(sample_batch(5, bernoulli(0.3), 3.0, 2000, seed=6), st)
        assert res.violation <= 3 * res.std_err


class TestFluctuations:
    def test_zero_lambda_closed_form(self):
        # independent posterior: <Q^2> - <Q>^2 = var |X|^2 / n^2 per instance
        prior = bernoulli(0.3)
        _, m2, var = moments(prior)
        for inst in sample_batch(6, prior, 0.0, 5, seed=1):
            post = exact_posterior(inst)
            thermal = post.mean_overlap_sq - post.mean_overlap ** 2
            assert thermal == pytest.approx(var * inst.signal @ inst.signal / 36, rel=1e-10)
        res = overlap_fluctuation(sample_batch(6, prior, 0.0, 4000, seed=1))
        assert res.thermal_var == pytest.approx(m2 * var / 6, rel=0.05)
        assert res.quenched_var == pytest.approx(0.3 ** 2 * var / 6, rel=0.1)

    def test_total_variance_decreases_with_n(self):
        totals = []
        for n in (4, 6, 8, 10):
            res = overlap_fluctuation(sample_batch(n, bernoulli(0.3), 2.0, 1500, seed=n))
            assert res.thermal_var >= 0 and res.quenched_var >= 0
            totals.append(res.thermal_var + res.quenched_var)
        assert all(b < a for a, b in zip(totals, totals[1:]))

    def test_overlap_within_range(self):
        stats = posterior_batch(sample_batch(6, bernoulli(0.3), 10.0, 2000, seed=2))
        assert np.all(stats.q1 >= 0)
        assert stats.q1.mean() <= 0.3 + 3 * stats.q1.std() / math.sqrt(2000)

    def test_matrix_mmse_overlap_identity(self):
        n, nd = 6, 3000
        batch = sample_batch(n, bernoulli(0.3), 4.0, nd, seed=12)
        d = []
        for inst in batch:
            post = exact_posterior(inst)
            rho_hat = inst.signal @ inst.signal / n
            d.append(post.matrix_mmse - (rho_hat ** 2 - post.mean_overlap_sq))
        d = np.array(d)
        assert abs(d.mean()) <= 3 * d.std() / math.sqrt(nd)


class TestInterpolationChecks:
    def test_boundary_values(self):
        res = boundary_values_check(6, bernoulli(0.3), 2.0, 0.05, 1000, seed=1)
        assert res.gap_t0 <= 0.3 * 0.05 * res.c_emp + 3 * res.mc_err_t0 + 1e-15
        assert res.gap_t1 <= 0.3 * 0.05 * res.c_emp + 3 * res.mc_err_t1 + 1e-15
        assert res.c_emp < 10

    def test_t1_with_zero_path(self):
        prior = bernoulli(0.3)
        res = boundary_values_check(6, prior, 2.0, 0.05, 1000, seed=1, q_const=0.0)
        assert res.gap_t1 <= 0.3 * 0.05 / 2 + 3 * res.mc_err_t1

    def test_gap_linear_in_s(self):
        a = boundary_values_check(6, bernoulli(0.3), 2.0, 0.1, 2000, seed=5, q_const=0.0)
        b = boundary_values_check(6, bernoulli(0.3), 2.0, 0.05, 2000, seed=5, q_const=0.0)
        assert a.gap_t0 / b.gap_t0 == pytest.approx(2.0, rel=0.25)

    def test_sum_rule_remainders(self):
        res = sum_rule_check(6, bernoulli(0.3), 3.0, 0.1, 0.05, 500, 8, seed=2)
        assert res.remainder_r1 == 0.0
        assert res.remainder_r2 >= 0 and res.remainder_r3 >= 0
        assert abs(res.residual) <= 10 * (0.3 * 0.05 + 3.0 / 6) + 3 * res.mc_err
        assert res.residual == pytest.approx(res.lhs - res.rhs, abs=1e-14)

    def test_ode_zero_lambda(self):
        path = adaptive_ode_solve(5, bernoulli(0.3), 0.0, 0.05, 8, 50, seed=0)
        assert all(r == 0.05 for _, r in path.R_path)

    def test_ode_path(self):
        path = adaptive_ode_solve(6, bernoulli(0.3), 4.0, 0.05, 16, 200, seed=0)
        rs = [r for _, r in path.R_path]
        assert len(rs) == 17 and path.R_path[-1][0] == pytest.approx(1.0)
        assert all(b >= a for a, b in zip(rs, rs[1:]))
        assert all(0.0 <= q <= 0.3 for _, q in path.q_path)
        integral = 0.05 + 4.0 * sum(q for _, q in path.q_path) / 16
        assert rs[-1] == pytest.approx(integral, rel=1e-12)

    def test_epsilon_sensitivity(self):
        est = epsilon_sensitivity(6, bernoulli(0.3), 3.0, 0.05, 8, 200, seed=1)
        assert est.value >= 1 - 3 * est.std_err


class TestJackknife:
    def test_linear_statistic_matches_standard_error(self):
        x = np.random.default_rng(0).normal(size=200)
        est, err = jackknife(lambda m: m, [x], n_blocks=200)
        assert est == pytest.approx(x.mean())
        assert err == pytest.approx(x.std(ddof=1) / math.sqrt(200), rel=1e-10)
