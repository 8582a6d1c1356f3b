import numpy as np
import pytest

from combgp import gp, svgp
from combgp.arms import BaseArm
from combgp.errors import InputError, NumericError
from combgp.kernels import ContextKernel, FeatureKernelParams

from conftest import random_arms


def _toy(rng, n=20, noise=0.1):
    k = ContextKernel(FeatureKernelParams(1.0, (0.7, 0.7)))
    arms = random_arms(rng, n, scale=2.0)
    f = gp.sample_function(k, 0.0, arms, rng)
    y = f + np.sqrt(noise) * rng.standard_normal(n)
    return k, arms, y


def _exact_q(k, Z, y, noise, mean=0.0):
    K = k.gram(Z)
    A = np.linalg.solve(K + noise * np.eye(len(Z)), np.eye(len(Z)))
    return K @ A @ (y - mean), K - K @ A @ K


class TestElbo:
    def test_prior_q_with_no_data_is_zero(self, rng):
        k, arms, _ = _toy(rng, 5)
        s = svgp.init_svgp(k, arms, 0.0, 0.1)
        assert svgp.svgp_elbo(s, [], [], 0) == pytest.approx(0.0, abs=1e-9)

    def test_exact_conditional_attains_log_marginal(self, rng):
        k, arms, y = _toy(rng, 12)
        m, S = _exact_q(k, arms, y, 0.1)
        s = svgp.init_svgp(k, arms, 0.0, 0.1)
        s = svgp.SVGPState(k, s.prior_mean, 0.1, tuple(arms), m, S)
        lml = gp.log_marginal_likelihood(gp.condition(gp.make_state(k, 0.0, 0.1), arms, y))
        assert svgp.svgp_elbo(s, arms, y, len(arms)) == pytest.approx(lml, abs=1e-6)

    def test_lower_bound_on_random_states(self, rng):
        for _ in range(30):
            k, arms, y = _toy(rng, 10)
            Z = arms[: int(rng.integers(1, 11))]
            M = len(Z)
            B = rng.normal(size=(M, M))
            s0 = svgp.init_svgp(k, Z, 0.0, 0.1)
            s = svgp.SVGPState(k, s0.prior_mean, 0.1, tuple(Z), rng.normal(size=M), B @ B.T + 0.1 * np.eye(M))
            lml = gp.log_marginal_likelihood(gp.condition(gp.make_state(k, 0.0, 0.1), arms, y))
            assert svgp.svgp_elbo(s, arms, y, len(arms)) <= lml + 1e-8

    def test_total_count_smaller_than_batch(self, rng):
        k, arms, y = _toy(rng, 5)
        with pytest.raises(InputError):
            svgp.svgp_elbo(svgp.init_svgp(k, arms, 0.0, 0.1), arms, y, 2)

    def test_minibatch_scaling(self, rng):
        k, arms, y = _toy(rng, 8)
        s = svgp.init_svgp(k, arms[:3], 0.0, 0.1)
        full = svgp.svgp_elbo(s, arms, y, 8)
        kl_only = svgp.svgp_elbo(s, [], [], 0)
        half = svgp.svgp_elbo(s, arms[:4], y[:4], 8) + svgp.svgp_elbo(s, arms[4:], y[4:], 8)
        # the two half-batch estimates average to the full-batch value
        assert 0.5 * half == pytest.approx(full, rel=1e-10)
        assert kl_only == pytest.approx(0.0, abs=1e-9)


class TestNgdStep:
    def test_rate_zero_is_identity(self, rng):
        k, arms, y = _toy(rng, 6)
        s = svgp.init_svgp(k, arms, 0.0, 0.1)
        assert svgp.svgp_ngd_step(s, arms, y, 6, ngd_rate=0.0, inner_rate=0.0) is s

    def test_fixed_point_at_optimum(self, rng):
        k, arms, y = _toy(rng, 8)
        m, S = _exact_q(k, arms, y, 0.1)
        s0 = svgp.init_svgp(k, arms, 0.0, 0.1, learn_inducing=False)
        s = svgp.SVGPState(k, s0.prior_mean, 0.1, tuple(arms), m, S, learn_inducing=False)
        s2 = svgp.svgp_ngd_step(s, arms, y, 8)
        np.testing.assert_allclose(s2.m, s.m, atol=1e-8)
        np.testing.assert_allclose(s2.S, s.S, atol=1e-8)

    def test_unit_rate_reaches_optimum(self, rng):
        k, arms, y = _toy(rng, 8)
        m, S = _exact_q(k, arms, y, 0.1)
        s = svgp.init_svgp(k, arms, 0.0, 0.1, learn_inducing=False)
        s = svgp.svgp_ngd_step(s, arms, y, 8, ngd_rate=1.0)
        np.testing.assert_allclose(s.m, m, atol=1e-6)
        np.testing.assert_allclose(s.S, S, atol=1e-6)

    @pytest.mark.parametrize("learn", [False, True])
    def test_elbo_non_decreasing(self, rng, learn):
        k, arms, y = _toy(rng, 20)
        s = svgp.init_svgp(k, arms[::2], 0.0, 0.1, learn_inducing=learn)
        prev = svgp.svgp_elbo(s, arms, y, 20)
        for _ in range(50):
            s = svgp.svgp_ngd_step(s, arms, y, 20)
            cur = svgp.svgp_elbo(s, arms, y, 20)
            assert cur >= prev - 1e-6
            prev = cur

    def test_covariance_stays_psd(self, rng):
        k, arms, y = _toy(rng, 15)
        s = svgp.init_svgp(k, arms[:5], 0.0, 0.1)
        for _ in range(20):
            s = svgp.svgp_ngd_step(s, arms, y, 15)
        assert np.abs(s.S - s.S.T).max() < 1e-12
        assert np.linalg.eigvalsh(s.S).min() >= -1e-8

    def test_inducing_edges_frozen(self, rng):
        k, arms, y = _toy(rng, 10)
        s = svgp.init_svgp(k, arms[:4], 0.0, 0.1)
        for _ in range(5):
            s = svgp.svgp_ngd_step(s, arms, y, 10)
        assert [z.edge for z in s.inducing] == [a.edge for a in arms[:4]]

    def test_non_finite_gradient_names_batch(self, rng):
        k, arms, y = _toy(rng, 5)
        y = y.copy()
        y[0] = np.inf
        s = svgp.init_svgp(k, arms, 0.0, 0.1)
        with pytest.raises(NumericError, match="batch 17"):
            svgp.svgp_ngd_step(s, arms, y, 5, batch_id=17)


class TestInducingGradient:
    def test_matches_finite_differences(self, rng):
        k, arms, y = _toy(rng, 10)
        Z = arms[:4]
        M = 4
        B = rng.normal(size=(M, M))
        s0 = svgp.init_svgp(k, Z, 0.0, 0.1)
        s = svgp.SVGPState(k, s0.prior_mean, 0.1, tuple(Z), rng.normal(size=M), B @ B.T + np.eye(M))
        terms = svgp._Terms(s, arms, y, 10)
        g = terms.grad_inducing_contexts(s.m, s.S)
        h = 1e-6
        for j in range(M):
            for d in range(2):
                def moved(delta):
                    Zn = list(Z)
                    c = np.array(Zn[j].context)
                    c[d] += delta
                    Zn[j] = BaseArm(Zn[j].edge, tuple(c))
                    return svgp.svgp_elbo(svgp.SVGPState(k, s.prior_mean, 0.1, tuple(Zn), s.m, s.S), arms, y, 10)

                fd = (moved(h) - moved(-h)) / (2 * h)
                assert g[j, d] == pytest.approx(fd, rel=1e-4, abs=1e-5)


class TestPredictAndReinduce:
    def test_prior_prediction(self, rng):
        k, arms, _ = _toy(rng, 6)
        s = svgp.init_svgp(k, arms[:3], 0.5, 0.1)
        mean, var = svgp.svgp_predict(s, arms)
        np.testing.assert_allclose(mean, 0.5, atol=1e-10)
        np.testing.assert_allclose(var, 1.0, atol=1e-6)

    def test_cov_diagonal_matches_variance(self, rng):
        k, arms, y = _toy(rng, 8)
        s = svgp.svgp_ngd_step(svgp.init_svgp(k, arms[:4], 0.0, 0.1), arms, y, 8, ngd_rate=1.0)
        np.testing.assert_allclose(np.diag(svgp.svgp_predict_cov(s, arms)), svgp.svgp_predict(s, arms)[1], atol=1e-10)

    def test_reinduce_superset_keeps_predictions(self, rng):
        k, arms, y = _toy(rng, 10)
        s = svgp.svgp_ngd_step(svgp.init_svgp(k, arms[:3], 0.0, 0.1, learn_inducing=False), arms, y, 10, ngd_rate=1.0)
        s2 = svgp.reinduce(s, arms[:6])
        np.testing.assert_allclose(svgp.svgp_predict(s, arms)[0], svgp.svgp_predict(s2, arms)[0], atol=1e-6)


class TestSelectInducing:
    CTX = {"e1": (0.0,), "e2": (1.0,), "e3": (2.0,)}

    def test_top_m(self):
        Z = svgp.select_inducing({"e1": 5, "e2": 3, "e3": 1}, self.CTX, 2)
        assert [z.edge for z in Z] == ["e1", "e2"]

    def test_fewer_than_m(self):
        Z = svgp.select_inducing({"e1": 5, "e3": 1}, self.CTX, 10)
        assert [z.edge for z in Z] == ["e1", "e3"]

    def test_tie_break_by_id(self):
        Z = svgp.select_inducing({"e2": 4, "e1": 4}, self.CTX, 1)
        assert [z.edge for z in Z] == ["e1"]
        assert Z[0].context == (0.0,)

    def test_nothing_visited(self):
        with pytest.raises(InputError):
            svgp.select_inducing({}, self.CTX, 3)
