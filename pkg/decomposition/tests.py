import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from core.exceptions import DomainError, EmptyRowError, ShapeMismatchError
from decomposition.identities import (
    DecomposedWeight, attention_row, decompose_dot, decompose_gat, gat_pair, identity_error,
)
from decomposition.sparsity import sparsity_limit_check, weight_histogram_tail_mass
from numerics.rng import Rng
from numerics.special import stable_softmax


class DecomposeDotTests(SimpleTestCase):

    def test_orthogonal_unit_vectors(self):
        w = decompose_dot([1.0, 0.0], [0.0, 1.0], d_k=2)
        self.assertAlmostEqual(w.similarity, 0.49307, places=5)
        self.assertAlmostEqual(w.magnitude, math.exp(1 / math.sqrt(2)), places=12)
        self.assertAlmostEqual(w.magnitude, 2.02812, delta=1e-5)
        self.assertAlmostEqual(w.unnormalized, 1.0, places=12)

    def test_zero_vectors(self):
        w = decompose_dot(np.zeros(4), np.zeros(4), d_k=3)
        self.assertEqual((w.similarity, w.magnitude, w.unnormalized), (1.0, 1.0, 1.0))

    def test_identity_over_random_pairs(self):
        rng = Rng(2024)
        for d_k in (1, 2, 8, 32):
            worst = 0.0
            for _ in range(1000):
                q, k = rng.uniform(-3.0, 3.0, size=(2, d_k))
                w = decompose_dot(q, k, d_k)
                worst = max(worst, identity_error(w, float(q @ k) / math.sqrt(d_k)))
                self.assertLessEqual(w.similarity, 1.0)
            self.assertLessEqual(worst, 1e-12, msg=f"d_k={d_k}")

    def test_magnitude_exponent_scales_quadratically(self):
        rng = Rng(7)
        q, k = rng.normal(size=(2, 6))
        for p in (2.0, 1.0, 0.5):
            base = decompose_dot(q, k, 6, p).log_magnitude
            scaled = decompose_dot(3.0 * q, 3.0 * k, 6, p).log_magnitude
            self.assertAlmostEqual(scaled / base, 9.0, delta=9e-10)

    def test_errors(self):
        with self.assertRaises(ShapeMismatchError):
            decompose_dot([1.0, 2.0], [1.0], 2)
        with self.assertRaises(DomainError):
            decompose_dot([1.0], [1.0], 0)
        with self.assertRaises(DomainError):
            decompose_dot([1.0], [1.0], 1, p=-1.0)


class DecomposeGatTests(SimpleTestCase):

    def _draw(self, rng, want_positive):
        while True:
            h_i, h_j = rng.normal(size=(2, 5))
            W = rng.normal(size=(4, 5))
            a = rng.normal(size=8)
            pre = float(a @ np.concatenate([W @ h_i, W @ h_j]))
            if (pre > 0) == want_positive and abs(pre) > 1e-3:
                return h_i, h_j, W, a, pre

    def test_both_slope_branches(self):
        rng = Rng(99)
        for positive in (True, False):
            worst = 0.0
            for _ in range(500):
                h_i, h_j, W, a, pre = self._draw(rng, positive)
                w = decompose_gat(h_i, h_j, W, a, c=0.2)
                target = pre if positive else 0.2 * pre
                worst = max(worst, identity_error(w, target))
                self.assertEqual(gat_pair(h_i, h_j, W, a, 0.2).c_eff, 1.0 if positive else 0.2)
            self.assertLessEqual(worst, 1e-10)

    def test_zero_features_give_unit_weight(self):
        rng = Rng(1)
        w = decompose_gat(np.zeros(3), np.zeros(3), rng.normal(size=(2, 3)), rng.normal(size=4), c=0.2)
        self.assertAlmostEqual(w.unnormalized, 1.0, places=12)

    def test_disjoint_support(self):
        rng = Rng(4)
        gp = gat_pair(*rng.normal(size=(2, 3)), rng.normal(size=(2, 3)), rng.normal(size=4), 0.5)
        self.assertTrue(np.all(gp.q[2:] == 0.0))
        self.assertTrue(np.all(gp.k[:2] == 0.0))

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            decompose_gat(np.ones(3), np.ones(3), np.ones((2, 3)), np.ones(5), 0.2)
        with self.assertRaises(DomainError):
            decompose_gat(np.ones(3), np.ones(3), np.ones((2, 3)), np.ones(4), 0.0)


class AttentionRowTests(SimpleTestCase):

    def test_examples(self):
        assert_allclose(attention_row([2.0, 2.0, 2.0, 2.0]), [0.25] * 4)
        assert_allclose(attention_row([1.0, 3.0]), [0.25, 0.75], atol=1e-15)

    def test_matches_softmax_of_logs(self):
        values = Rng(3).uniform(0.1, 20.0, size=12)
        assert_allclose(attention_row(values), stable_softmax(np.log(values)), atol=1e-12)
        self.assertAlmostEqual(float(attention_row(values).sum()), 1.0, places=12)

    def test_depends_only_on_product(self):
        rng = Rng(5)
        row = [DecomposedWeight(*rng.normal(size=2)) for _ in range(6)]
        shifted = [DecomposedWeight(w.log_similarity - 0.7, w.log_magnitude + 4.2) for w in row]
        scaled = [DecomposedWeight(w.log_similarity, w.log_magnitude + math.log(13.0)) for w in row]
        assert_allclose(attention_row(shifted), attention_row(row), atol=1e-14)
        assert_allclose(attention_row(scaled), attention_row(row), atol=1e-14)

    def test_empty_row(self):
        with self.assertRaises(EmptyRowError):
            attention_row([])


class SparsityLimitTests(SimpleTestCase):
    GRID = (2.0, 1.0, 0.5, 0.1, 0.05)

    def test_single_key_rows(self):
        rng = Rng(0)
        report = sparsity_limit_check(rng.normal(size=(5, 4)), rng.normal(size=(5, 1, 4)), 4, self.GRID)
        self.assertTrue(all(r.max_weight == 1.0 for r in report.rows))

    def test_rows_concentrate_as_p_shrinks(self):
        rng = Rng(11)
        queries = rng.normal(size=(200, 8))
        keys = rng.normal(size=(200, 8, 8))
        report = sparsity_limit_check(queries, keys, 8, self.GRID)
        total, one_hot = report.one_hot_rows(0.05, threshold=0.99)
        self.assertGreater(total, 0)
        self.assertEqual(one_hot, total)
        self.assertGreaterEqual(report.entropy_monotone_fraction, 0.95)

    def test_histogram_bimodal_only_at_small_p(self):
        rng = Rng(12)
        report = sparsity_limit_check(rng.normal(size=(64, 8)), rng.normal(size=(64, 16, 8)), 8, (2.0, 0.1))
        dense = np.concatenate([r.weights for r in report.for_p(2.0)])
        sparse = np.concatenate([r.weights for r in report.for_p(0.1)])
        self.assertLess(weight_histogram_tail_mass(dense), 0.9)
        self.assertGreaterEqual(weight_histogram_tail_mass(sparse), 0.9)

    def test_ties_are_flagged(self):
        query = np.array([1.0, 0.0])
        keys = np.array([[[0.0, 1.0], [0.0, -1.0]]])
        report = sparsity_limit_check(query[None], keys, 2, (2.0, 1.0))
        self.assertEqual(report.tied_rows[2.0], [0])
        self.assertEqual(report.one_hot_rows(2.0), (0, 0))

    def test_grid_validation(self):
        with self.assertRaises(DomainError):
            sparsity_limit_check(np.ones((1, 2)), np.ones((1, 2, 2)), 2, (0.5, 1.0))
