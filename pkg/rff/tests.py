import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from core.exceptions import DomainError, ShapeMismatchError
from numerics.rng import Rng
from rff.bounds import ErrorBoundInputs, error_bound, minimal_sample_count
from rff.features import (
    features_nonstationary, features_stationary, gaussian_pair_kernel, kernel_matrix,
    kernel_nonstationary, kernel_squared, kernel_stationary, periodic_closed_form, rbf_closed_form,
)
from spectral.samplers import sample_gaussian, sample_gaussian_pair
from spectral.samples import SampleKind, SpectralSample


class FeatureMapTests(SimpleTestCase):

    def test_zero_input(self):
        sample = sample_gaussian(3, 4, 1.0, Rng(0))
        assert_allclose(features_stationary(np.zeros(3), sample), [1, 0] * 4)

    def test_single_point_at_angle_pi(self):
        sample = SpectralSample(np.array([[np.pi, 0.0]]))
        assert_allclose(features_stationary([1.0, 0.0], sample), [-1.0, 0.0], atol=1e-15)

    def test_bounded(self):
        sample = sample_gaussian(5, 64, 0.3, Rng(1))
        phi = features_stationary(Rng(2).normal(size=(10, 5)) * 4, sample)
        self.assertEqual(phi.shape, (10, 128))
        self.assertTrue(np.all(np.abs(phi) <= 1.0))

    def test_dimension_mismatch(self):
        sample = sample_gaussian(3, 4, 1.0, Rng(0))
        with self.assertRaises(ShapeMismatchError):
            features_stationary(np.zeros(2), sample)
        with self.assertRaises(DomainError):
            features_nonstationary(np.zeros(3), sample)


class StationaryKernelTests(SimpleTestCase):

    def test_diagonal_and_orthogonal_shift(self):
        sample = SpectralSample(np.column_stack([Rng(3).normal(size=20), np.zeros(20)]))
        q = np.array([0.4, -1.3])
        self.assertEqual(float(kernel_stationary(q, q, sample)), 1.0)
        self.assertAlmostEqual(float(kernel_stationary(q, q + [0.0, 2.5], sample)), 1.0, places=15)

    def test_symmetric_and_translation_invariant(self):
        rng = Rng(4)
        sample = sample_gaussian(4, 500, 1.0, rng)
        for _ in range(20):
            q, k, t = rng.normal(size=(3, 4))
            self.assertAlmostEqual(float(kernel_stationary(q, k, sample)), float(kernel_stationary(k, q, sample)), delta=1e-15)
            self.assertAlmostEqual(
                float(kernel_stationary(q + t, k + t, sample)), float(kernel_stationary(q, k, sample)), delta=1e-12
            )

    def test_converges_to_gaussian_expectation(self):
        rng = Rng(5)
        sample = sample_gaussian(3, 100_000, 1.0, rng)
        q = rng.uniform(-0.6, 0.6, size=(50, 3))
        k = rng.uniform(-0.6, 0.6, size=(50, 3))
        delta = np.sum((q - k) ** 2, axis=1)
        assert_allclose(kernel_stationary(q, k, sample), np.exp(-delta / 4.0), atol=0.02)

    def test_gram_is_positive_semidefinite(self):
        rng = Rng(6)
        sample = sample_gaussian(3, 200, 0.7, rng)
        X = rng.normal(size=(64, 3))
        gram = kernel_matrix(X, X, sample)
        assert_allclose(gram, kernel_stationary(X[:, None, :], X[None, :, :], sample), atol=1e-12)
        self.assertGreaterEqual(np.linalg.eigvalsh(gram).min(), -1e-8)
        self.assertTrue(np.all(gram ** 2 >= 0.0))


class NonstationaryKernelTests(SimpleTestCase):

    def test_collapses_when_point_sets_coincide(self):
        rng = Rng(7)
        base = sample_gaussian(3, 300, 1.0, rng)
        pair = SpectralSample(base.points, kind=SampleKind.NONSTATIONARY_PAIR, points2=base.points.copy())
        for _ in range(10):
            q, k = rng.normal(size=(2, 3))
            self.assertAlmostEqual(float(kernel_nonstationary(q, k, pair)), float(kernel_stationary(q, k, base)), delta=1e-14)
        q = rng.normal(size=3)
        self.assertAlmostEqual(float(kernel_nonstationary(q, q, pair)), 1.0, delta=1e-14)

    def test_symmetric(self):
        rng = Rng(8)
        pair = sample_gaussian_pair(2, 100, rng, mean1=1.0, mean2=-1.0)
        q, k = rng.normal(size=(2, 2))
        self.assertAlmostEqual(float(kernel_nonstationary(q, k, pair)), float(kernel_nonstationary(k, q, pair)), delta=1e-15)

    def test_translation_changes_value(self):
        pair = sample_gaussian_pair(2, 10_000, Rng(9), mean1=2.0, mean2=-2.0)
        q, k, t = np.array([0.3, 0.1]), np.array([-0.2, 0.4]), np.array([0.5, -0.7])
        before = float(kernel_nonstationary(q, k, pair))
        after = float(kernel_nonstationary(q + t, k + t, pair))
        self.assertGreater(abs(before - after), 1e-3)
        self.assertAlmostEqual(before, float(gaussian_pair_kernel(q, k, 2.0, -2.0, 1.0)), delta=0.03)
        self.assertAlmostEqual(after, float(gaussian_pair_kernel(q + t, k + t, 2.0, -2.0, 1.0)), delta=0.03)


class SquaredKernelTests(SimpleTestCase):

    def _errors(self, R, seed, q, k, lengthscale):
        sample = sample_gaussian(q.shape[1], R, lengthscale, Rng(seed))
        return np.abs(kernel_squared(q, k, sample) - rbf_closed_form(q, k, lengthscale))

    def test_matches_rbf_similarity(self):
        rng = Rng(10)
        q = rng.uniform(-1.0, 1.0, size=(200, 4))
        k = rng.uniform(-1.0, 1.0, size=(200, 4))
        errors = self._errors(100_000, 11, q, k, math.sqrt(2.0))
        self.assertGreaterEqual(np.mean(errors <= 0.02), 0.95)
        self.assertEqual(float(kernel_squared(q[0], q[0], sample_gaussian(4, 10, 1.0, rng))), 1.0)

    def test_monte_carlo_rate(self):
        rng = Rng(12)
        q = rng.uniform(-1.0, 1.0, size=(100, 4))
        k = rng.uniform(-1.0, 1.0, size=(100, 4))
        grid = [100, 1000, 10_000, 100_000]
        medians = [
            np.median(np.concatenate([self._errors(R, 100 * i + trial, q, k, math.sqrt(2.0)) for trial in range(5)]))
            for i, R in enumerate(grid)
        ]
        slope = np.polyfit(np.log10(grid), np.log10(medians), 1)[0]
        self.assertAlmostEqual(slope, -0.5, delta=0.15)

    def test_rbf_closed_form(self):
        self.assertEqual(float(rbf_closed_form([1.0, 2.0], [1.0, 2.0], 0.5)), 1.0)
        self.assertAlmostEqual(float(rbf_closed_form([0.0, 0.0], [math.sqrt(2.0) * 0.7, 0.0], 0.7)), math.exp(-1), places=12)
        self.assertAlmostEqual(float(rbf_closed_form([1.0, 0.0], [0.0, 1.0], 2 ** 0.25)), 0.49307, places=5)
        with self.assertRaises(DomainError):
            rbf_closed_form([0.0], [0.0], 0.0)

    def test_periodic_closed_form(self):
        self.assertEqual(float(periodic_closed_form([0.3], [2.3], period=2.0)), 1.0)
        self.assertAlmostEqual(float(periodic_closed_form([0.0], [1.0], period=2.0)), math.exp(-2.0), places=12)
        self.assertAlmostEqual(
            float(periodic_closed_form([0.0, 0.0], [0.3, 0.4], period=2.0, lengthscale=2.0)),
            math.exp(-0.5 * math.sin(math.pi * 0.25) ** 2), places=12,
        )
        with self.assertRaises(DomainError):
            periodic_closed_form([0.0], [0.0], period=0.0)


class ErrorBoundTests(SimpleTestCase):

    def test_worked_example(self):
        inputs = ErrorBoundInputs(D=2.0, sigma1_sq=0.5, sigma2_sq=0.5, R=1000, d=1, epsilon=0.5)
        value = error_bound(inputs)
        self.assertAlmostEqual(value / (256 * 16 * math.exp(-62.5)), 1.0, places=12)
        self.assertEqual(f"{value:.2e}", '2.94e-24')

    def test_monotone(self):
        base = dict(D=2.0, sigma1_sq=0.5, sigma2_sq=0.5, d=2, epsilon=0.3)
        by_r = [error_bound(ErrorBoundInputs(R=r, **base)) for r in (10, 100, 1000)]
        self.assertTrue(by_r[0] > by_r[1] > by_r[2])
        base['D'] = 4.0
        self.assertGreater(error_bound(ErrorBoundInputs(R=100, **base)), by_r[1])

    def test_minimal_sample_count(self):
        inputs = ErrorBoundInputs(D=2.0, sigma1_sq=0.5, sigma2_sq=0.5, R=1, d=1, epsilon=0.5)
        R = minimal_sample_count(inputs, 0.05)
        self.assertLessEqual(error_bound(ErrorBoundInputs(2.0, 0.5, 0.5, R, 1, 0.5)), 0.05)
        self.assertGreater(error_bound(ErrorBoundInputs(2.0, 0.5, 0.5, R - 1, 1, 0.5)), 0.05)

    def test_inputs_must_be_positive(self):
        with self.assertRaises(DomainError):
            ErrorBoundInputs(D=0.0, sigma1_sq=1.0, sigma2_sq=1.0, R=10, d=1, epsilon=0.1)
