import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy import optimize

from core.exceptions import (
    DomainError, EmptyRowError, NotPositiveDefiniteError, ShapeMismatchError,
)
from numerics.linalg import cholesky, log_det_from_cholesky, matmul
from numerics.rng import Rng
from numerics.special import (
    gauss_cdf, gauss_quantile, log_softmax, p_norm, shannon_entropy, stable_softmax,
)


class MatmulTests(SimpleTestCase):

    def test_identity_and_hand_arithmetic(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert_allclose(matmul(np.eye(2), a), a)
        assert_allclose(matmul(a, [[1.0], [1.0]]), [[3.0], [7.0]])

    def test_matches_triple_loop(self):
        rng = Rng(11)
        a = rng.normal(size=(5, 7))
        b = rng.normal(size=(7, 3))
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for k in range(7):
                    expected[i, j] += a[i, k] * b[k, j]
        assert_allclose(matmul(a, b), expected, rtol=0, atol=1e-12)

    def test_associativity(self):
        rng = Rng(12)
        for _ in range(20):
            a, b, c = (rng.normal(size=(6, 6)) for _ in range(3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            self.assertLessEqual(np.max(np.abs(left - right)) / np.max(np.abs(left)), 1e-9)

    def test_mismatch_names_both_shapes(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        self.assertIn('(2, 3) vs (2, 3)', str(ctx.exception))


class SoftmaxTests(SimpleTestCase):

    def test_examples(self):
        assert_allclose(stable_softmax([0.0, 0.0, 0.0]), [1 / 3] * 3)
        assert_allclose(stable_softmax([1000.0, 0.0]), [1.0, 0.0])
        assert_allclose(stable_softmax([1.0, 2.0, 3.0]), [0.09003, 0.24473, 0.66524], atol=5e-6)

    def test_mask_zeroes_entries_and_rows_sum_to_one(self):
        weights = stable_softmax([[1.0, 5.0, 2.0], [0.3, 0.1, -4.0]], mask=[[True, False, True], [True, True, True]])
        self.assertEqual(weights[0, 1], 0.0)
        assert_allclose(weights.sum(axis=-1), [1.0, 1.0], atol=1e-12)

    def test_all_masked_row_raises(self):
        with self.assertRaises(EmptyRowError):
            stable_softmax([1.0, 2.0], mask=[False, False])

    def test_shift_invariance(self):
        rng = Rng(3)
        x = rng.normal(size=50)
        assert_allclose(stable_softmax(x + 17.25), stable_softmax(x), rtol=0, atol=1e-14)

    def test_log_softmax_consistent(self):
        x = np.array([0.5, -1.0, 2.0])
        assert_allclose(np.exp(log_softmax(x)), stable_softmax(x), atol=1e-15)


class PNormTests(SimpleTestCase):

    def test_examples(self):
        self.assertAlmostEqual(float(p_norm([3.0, 4.0], 2)), 5.0, places=12)
        self.assertAlmostEqual(float(p_norm([3.0, 4.0], 1)), 7.0, places=12)
        self.assertAlmostEqual(float(p_norm([3.0, 4.0], 0.5)), 13.9282, places=4)

    def test_rejects_non_positive_p(self):
        with self.assertRaises(DomainError):
            p_norm([1.0], 0.0)

    def test_homogeneous_and_monotone_in_p(self):
        rng = Rng(5)
        grid = [0.05, 0.1, 0.5, 1.0, 2.0, 4.0]
        for _ in range(50):
            x = rng.normal(size=8)
            norms = [float(p_norm(x, p)) for p in grid]
            for smaller, larger in zip(norms[1:], norms[:-1]):
                self.assertLessEqual(smaller, larger * (1 + 1e-12))
            self.assertAlmostEqual(float(p_norm(-2.5 * x, 0.5)), 2.5 * norms[2], delta=1e-10 * norms[2])


class CholeskyTests(SimpleTestCase):

    def test_examples(self):
        assert_allclose(cholesky(np.eye(3)), np.eye(3))
        factor = cholesky([[4.0, 2.0], [2.0, 3.0]])
        assert_allclose(factor, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-12)
        assert_allclose(factor @ factor.T, [[4.0, 2.0], [2.0, 3.0]], atol=1e-10)
        self.assertAlmostEqual(log_det_from_cholesky(factor), np.log(8.0), places=12)

    def test_indefinite_reports_pivot(self):
        with self.assertRaises(NotPositiveDefiniteError) as ctx:
            cholesky([[1.0, 2.0], [2.0, 1.0]])
        self.assertEqual(ctx.exception.pivot, 1)


class GaussTests(SimpleTestCase):

    def test_cdf_and_quantile_examples(self):
        self.assertEqual(float(gauss_cdf(0.0)), 0.5)
        oracle = optimize.brentq(lambda x: float(gauss_cdf(x)) - 0.975, 0.0, 5.0, xtol=1e-14)
        self.assertAlmostEqual(float(gauss_quantile(0.975)), oracle, places=10)
        self.assertAlmostEqual(float(gauss_quantile(0.975)), 1.95996, places=5)

    def test_round_trip(self):
        grid = np.linspace(-6.0, 6.0, 1000)
        self.assertLessEqual(np.max(np.abs(gauss_quantile(gauss_cdf(grid)) - grid)), 1e-8)

    def test_quantile_domain(self):
        for bad in (0.0, 1.0, -0.2, np.nan):
            with self.assertRaises(DomainError):
                gauss_quantile(bad)


class EntropyTests(SimpleTestCase):

    def test_uniform_and_one_hot(self):
        self.assertAlmostEqual(float(shannon_entropy(np.full(8, 1 / 8))), np.log(8), places=12)
        self.assertEqual(float(shannon_entropy([0.0, 1.0, 0.0])), 0.0)


class RngTests(SimpleTestCase):

    def test_same_seed_same_stream(self):
        assert_allclose(Rng(42).random(10_000), Rng(42).random(10_000), rtol=0, atol=0)

    def test_children_independent_of_creation_order(self):
        first = Rng(9)
        a = first.child('train').standard_normal(5)
        first.child('eval').standard_normal(100)
        second = Rng(9)
        second.child('eval')
        b = second.child('train').standard_normal(5)
        assert_allclose(a, b, rtol=0, atol=0)
        self.assertFalse(np.allclose(a, Rng(9).child('eval').standard_normal(5)))
