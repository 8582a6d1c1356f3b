import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from combgp.arms import BaseArm
from combgp.errors import InputError, NumericError
from combgp.kernels import (
    CompositeKernel,
    ContextKernel,
    FeatureKernelParams,
    GraphKernelParams,
    LineGraph,
    composite_kernel,
    graph_matern_gram,
    incidence_laplacian,
    jittered_cholesky,
    matern52,
    matern52_grad_x1,
    matern52_matrix,
)

from conftest import matern52_oracle, random_line_graph


def _psd_ok(K, tol=1e-8):
    scale = max(1.0, float(np.max(np.diag(K))))
    return np.min(linalg.eigvalsh(K)) >= -tol * scale


class TestFeatureParams:
    def test_rejects_other_smoothness(self):
        with pytest.raises(InputError):
            FeatureKernelParams(1.0, (1.0,), nu=1.5)

    @pytest.mark.parametrize("sf,ls", [(0.0, (1.0,)), (-1.0, (1.0,)), (1.0, (0.0,)), (1.0, ())])
    def test_rejects_bad_values(self, sf, ls):
        with pytest.raises(InputError):
            FeatureKernelParams(sf, ls)


class TestMatern52:
    def test_zero_distance_returns_outputscale(self):
        p = FeatureKernelParams(2.7, (0.3, 4.0))
        assert matern52((1.0, -2.0), (1.0, -2.0), p) == pytest.approx(2.7, abs=0)

    def test_unit_distance_value(self):
        # [DERIVED] closed form evaluated in high precision
        import mpmath

        mpmath.mp.dps = 40
        s5 = mpmath.sqrt(5)
        expected = float((1 + s5 + mpmath.mpf(5) / 3) * mpmath.e ** (-s5))
        got = matern52((0.0,), (1.0,), FeatureKernelParams(1.0, (1.0,)))
        assert got == pytest.approx(expected, rel=1e-13)
        # quoted to five decimals as 0.52400
        assert got == pytest.approx(0.52400, abs=1e-5)

    def test_far_points_decay(self):
        assert matern52((0.0,), (1e6,), FeatureKernelParams(1.0, (1.0,))) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            matern52((0.0, 1.0), (0.0,), FeatureKernelParams(1.0, (1.0, 1.0)))

    def test_monotone_in_distance(self):
        p = FeatureKernelParams(1.0, (1.0,))
        vals = [matern52((0.0,), (d,), p) for d in np.linspace(0, 20, 401)]
        assert np.all(np.diff(vals) <= 0)

    def test_matrix_matches_oracle(self, rng):
        p = FeatureKernelParams(1.7, (0.5, 2.0, 1.0))
        X1, X2 = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
        r = np.sqrt((((X1[:, None, :] - X2[None]) / np.array([0.5, 2.0, 1.0])) ** 2).sum(-1))
        np.testing.assert_allclose(matern52_matrix(X1, X2, p), matern52_oracle(r, 1.7), rtol=1e-13)

    def test_gradient_matches_finite_differences(self, rng):
        p = FeatureKernelParams(1.2, (0.8, 1.5))
        X1, X2 = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
        G = matern52_grad_x1(X1, X2, p)
        h = 1e-6
        for i in range(3):
            for k in range(2):
                Xp, Xm = X1.copy(), X1.copy()
                Xp[i, k] += h
                Xm[i, k] -= h
                fd = (matern52_matrix(Xp, X2, p) - matern52_matrix(Xm, X2, p))[i] / (2 * h)
                np.testing.assert_allclose(G[i, :, k], fd, atol=1e-8)

    def test_gradient_zero_at_coincident_points(self):
        p = FeatureKernelParams(1.0, (1.0,))
        X = np.array([[0.3]])
        assert matern52_grad_x1(X, X, p)[0, 0, 0] == 0.0


class TestIncidenceLaplacian:
    def test_two_edges_one_connection(self):
        lg = LineGraph(("a", "b"), (("a", "b"),))
        w = 1.7
        np.testing.assert_allclose(incidence_laplacian(lg, [w]), [[w**2, -(w**2)], [-(w**2), w**2]])

    def test_no_connections_is_zero(self):
        lg = LineGraph(("a", "b", "c"), ())
        np.testing.assert_array_equal(incidence_laplacian(lg, []), np.zeros((3, 3)))

    def test_mapping_weights(self):
        lg = LineGraph(("a", "b"), (("a", "b"),))
        np.testing.assert_allclose(incidence_laplacian(lg, {("a", "b"): 2.0}), [[4, -4], [-4, 4]])

    def test_unknown_edge_rejected(self):
        with pytest.raises(InputError):
            LineGraph(("a",), (("a", "zz"),))

    def test_weight_count_mismatch(self):
        lg = LineGraph(("a", "b"), (("a", "b"),))
        with pytest.raises(InputError):
            incidence_laplacian(lg, [1.0, 2.0])

    def test_psd_on_random_graphs(self, rng):
        for _ in range(100):
            lg = random_line_graph(rng, int(rng.integers(2, 9)))
            w = rng.uniform(0.2, 3.0, len(lg.connections))
            assert _psd_ok(incidence_laplacian(lg, w))


class TestGraphMatern:
    def test_disconnected_is_identity(self):
        lg = LineGraph(("a", "b", "c"), ())
        G = graph_matern_gram(lg, [], GraphKernelParams(nu=2.0, kappa=2.0, outputscale=1.0))
        np.testing.assert_allclose(G.matrix, np.eye(3), atol=1e-14)

    def test_path_graph_matches_independent_eigensolver(self):
        edges = tuple("abcde")
        lg = LineGraph(edges, tuple(zip(edges, edges[1:])))
        # Laplacian of the unit-weight path written out by hand
        lap = np.diag([1.0, 2, 2, 2, 1]) - np.diag(np.ones(4), 1) - np.diag(np.ones(4), -1)
        lam, U = np.linalg.eig(lap)
        lam, U = lam.real, U.real
        U = U / np.linalg.norm(U, axis=0)
        oracle = U @ np.diag((4.0 + lam) ** -2.0) @ U.T
        G = graph_matern_gram(lg, np.ones(4), GraphKernelParams(2.0, 1.0, 1.0))
        np.testing.assert_allclose(G.matrix, oracle, atol=1e-8)

    def test_outputscale_multiplies_covariance(self):
        edges = tuple("abc")
        lg = LineGraph(edges, (("a", "b"), ("b", "c")))
        G1 = graph_matern_gram(lg, [1.0, 1.0], GraphKernelParams(2.0, 1.0, 1.0)).matrix
        G3 = graph_matern_gram(lg, [1.0, 1.0], GraphKernelParams(2.0, 1.0, 3.0)).matrix
        np.testing.assert_allclose(G3, 3.0 * G1, rtol=1e-12)

    @pytest.mark.parametrize("n", range(3, 9))
    def test_equal_diagonal_on_cycles(self, n):
        edges = tuple(f"c{i}" for i in range(n))
        lg = LineGraph(edges, tuple((edges[i], edges[(i + 1) % n]) for i in range(n)))
        d = np.diag(graph_matern_gram(lg, np.ones(n), GraphKernelParams(2.0, 1.5, 1.0)).matrix)
        np.testing.assert_allclose(d, d[0], rtol=1e-10)

    def test_symmetric_and_psd_random(self, rng):
        for _ in range(100):
            lg = random_line_graph(rng, int(rng.integers(1, 9)))
            w = rng.uniform(0.2, 3.0, len(lg.connections))
            K = graph_matern_gram(lg, w, GraphKernelParams(rng.uniform(0.5, 3), rng.uniform(0.3, 2), 1.0)).matrix
            assert np.abs(K - K.T).max() <= 1e-10 * np.abs(K).max()
            assert _psd_ok(K)

    def test_empty_graph_rejected(self):
        with pytest.raises(InputError):
            graph_matern_gram(LineGraph((), ()), [], GraphKernelParams())

    def test_lookup_unknown_edge(self):
        G = graph_matern_gram(LineGraph(("a",), ()), [], GraphKernelParams())
        with pytest.raises(InputError):
            G("a", "nope")


class TestComposite:
    def _setup(self):
        edges = ("a", "b", "c")
        lg = LineGraph(edges, (("a", "b"), ("b", "c")))
        G = graph_matern_gram(lg, [1.0, 1.0], GraphKernelParams(2.0, 1.0, 2.0))
        return G, FeatureKernelParams(0.6, (1.0, 1.0)), FeatureKernelParams(0.4, (0.5, 0.5))

    def test_self_covariance(self):
        G, kf, kf2 = self._setup()
        a = BaseArm("b", (0.2, 0.3))
        assert composite_kernel(a, a, G, kf, kf2) == pytest.approx(G("b", "b") * 0.6 + 0.4, rel=1e-14)

    def test_zero_graph_covariance_leaves_additive(self):
        G = graph_matern_gram(LineGraph(("a", "b"), ()), [], GraphKernelParams(2.0, 2.0, 1.0))
        kf, kf2 = FeatureKernelParams(0.6, (1.0,)), FeatureKernelParams(0.4, (1.0,))
        a, b = BaseArm("a", (0.1,)), BaseArm("b", (0.1,))
        assert composite_kernel(a, b, G, kf, kf2) == pytest.approx(0.4, abs=1e-14)

    def test_kernel_object_matches_scalar_form(self, rng):
        G, kf, kf2 = self._setup()
        arms = [BaseArm(e, tuple(rng.normal(size=2))) for e in "abcab"]
        K = CompositeKernel(G, kf, kf2).gram(arms)
        for i, a in enumerate(arms):
            for j, b in enumerate(arms):
                assert K[i, j] == pytest.approx(composite_kernel(a, b, G, kf, kf2), rel=1e-12)

    def test_diag_matches_gram(self, rng):
        G, kf, kf2 = self._setup()
        arms = [BaseArm(e, tuple(rng.normal(size=2))) for e in "abc"]
        kern = CompositeKernel(G, kf, kf2)
        np.testing.assert_allclose(kern.diag(arms), np.diag(kern.gram(arms)), rtol=1e-13)

    def test_random_grams_psd(self, rng):
        G, kf, kf2 = self._setup()
        kern = CompositeKernel(G, kf, kf2)
        for _ in range(100):
            arms = [BaseArm(str(rng.choice(list("abc"))), tuple(rng.normal(size=2))) for _ in range(4)]
            assert _psd_ok(kern.gram(arms))

    def test_unknown_edge(self):
        G, kf, kf2 = self._setup()
        with pytest.raises(InputError):
            composite_kernel(BaseArm("z", (0.0, 0.0)), BaseArm("a", (0.0, 0.0)), G, kf, kf2)

    def test_context_gradient_fd(self, rng):
        G, kf, kf2 = self._setup()
        kern = CompositeKernel(G, kf, kf2)
        A = [BaseArm(e, tuple(rng.normal(size=2))) for e in "ab"]
        B = [BaseArm(e, tuple(rng.normal(size=2))) for e in "bca"]
        g = kern.grad_context(A, B)
        h = 1e-6
        for k in range(2):
            Ap = [BaseArm(a.edge, tuple(np.add(a.context, h * np.eye(2)[k]))) for a in A]
            Am = [BaseArm(a.edge, tuple(np.add(a.context, -h * np.eye(2)[k]))) for a in A]
            np.testing.assert_allclose(g[:, :, k], (kern(Ap, B) - kern(Am, B)) / (2 * h), atol=1e-8)


class TestContextKernel:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=8))
    def test_gram_symmetric_psd(self, pts):
        arms = [BaseArm(i, p) for i, p in enumerate(pts)]
        K = ContextKernel(FeatureKernelParams(1.0, (0.9, 1.1))).gram(arms)
        assert np.abs(K - K.T).max() <= 1e-10
        assert _psd_ok(K)


class TestJitteredCholesky:
    def test_duplicate_points_factor(self):
        arms = [BaseArm(0, (0.0,)), BaseArm(1, (0.0,))]
        K = ContextKernel(FeatureKernelParams(1.0, (1.0,))).gram(arms)
        L = jittered_cholesky(K)
        np.testing.assert_allclose(L @ L.T, K, atol=1e-6)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(jittered_cholesky(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_indefinite_raises(self):
        with pytest.raises(NumericError):
            jittered_cholesky(np.array([[1.0, 0.0], [0.0, -5.0]]))
