import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate, stats

from core.exceptions import CheckpointError, DomainError, NotPositiveDefiniteError
from numerics.rng import Rng
from numerics.special import gauss_cdf, gauss_pdf, gauss_quantile
from rff.features import kernel_squared, kernel_stationary, rbf_closed_form
from spectral.checkpoint import (
    copula_fields, copula_from_fields, density_fields, density_from_fields, export_spectral_components,
    load_checkpoint, save_checkpoint, spectral_components,
)
from spectral.densities import CopulaSpec, ImplicitDensity, copula_log_term, gaussian_copula_log_density
from spectral.samplers import (
    CopulaSampler, DirectSampler, ImplicitSampler, couple, direct_points, head_stream, implicit_points,
    sample_copula_joint, sample_gaussian, sample_implicit,
)


def standard_density(input_dim, output_dim, mu=0.0, log_sigma=0.0, seed=0):
    """Density with identity generator and constant N(mu, exp(log_sigma)^2) base."""
    density = ImplicitDensity(input_dim, output_dim, Rng(seed))
    density.params['encoder_w2'][:] = 0.0
    density.params['encoder_b2'][:output_dim] = mu
    density.params['encoder_b2'][output_dim:] = log_sigma
    return density


def bivariate_normal_cdf(x, y, rho):
    scale = math.sqrt(1.0 - rho * rho)
    value, _ = integrate.quad(
        lambda t: float(gauss_pdf(t)) * float(gauss_cdf((y - rho * t) / scale)),
        -np.inf, x, epsabs=1e-14, epsrel=1e-12, limit=200,
    )
    return value


class GaussianSamplerTests(SimpleTestCase):

    def test_moments(self):
        points = sample_gaussian(3, 100_000, 1.0, Rng(0)).points
        assert_allclose(points.var(axis=0), 0.5, atol=0.01)
        assert_allclose(points.mean(axis=0), 0.0, atol=0.01)

    def test_long_lengthscale_flattens_kernel(self):
        sample = sample_gaussian(2, 100, 1e8, Rng(1))
        self.assertLess(np.max(np.abs(sample.points)), 1e-6)
        self.assertAlmostEqual(float(kernel_stationary([3.0, -2.0], [0.0, 1.0], sample)), 1.0, places=10)

    def test_rejects_bad_lengthscale(self):
        with self.assertRaises(DomainError):
            sample_gaussian(2, 10, 0.0, Rng(0))


class ImplicitSamplerTests(SimpleTestCase):

    def test_identity_generator_gives_symmetrized_normal(self):
        density = standard_density(3, 4)
        rng = Rng(2)
        eps = rng.child('draw').standard_normal((1000, 4))
        sample = sample_implicit(np.ones(3), density, 1000, rng.child('draw'))
        self.assertEqual(sample.points.shape, (2000, 4))
        assert_array_equal(sample.points[:1000], eps)
        assert_array_equal(sample.points[1000:], -sample.points[:1000])
        self.assertLess(np.max(np.abs(sample.points.mean(axis=0))), 1e-12)

    def test_mirror_pairs_with_trained_shape(self):
        density = ImplicitDensity(3, 2, Rng(3))
        density.params['generator_w2'] = Rng(4).normal(size=(32, 2))
        density.params['generator_b2'] = np.array([0.3, -0.1])
        sample = sample_implicit(Rng(5).normal(size=(4, 3)), density, 50, Rng(6))
        self.assertEqual(sample.points.shape, (4, 100, 2))
        assert_array_equal(sample.points[:, 50:], -sample.points[:, :50])
        delta = np.array([0.7, -0.2])
        imag = np.sum(np.sin(sample.points[0, :50] @ delta)) + np.sum(np.sin(sample.points[0, 50:] @ delta))
        self.assertAlmostEqual(float(imag), 0.0, delta=1e-12)

    def test_same_noise_same_points(self):
        density = ImplicitDensity(3, 2, Rng(7))
        h = Rng(8).normal(size=3)
        eps = Rng(9).standard_normal((20, 2))
        assert_array_equal(implicit_points(h, density, eps).points, implicit_points(h, density, eps).points)

    def test_fresh_density_matches_rbf_scale(self):
        density = ImplicitDensity(5, 4, Rng(10), d_k=4)
        mu, log_sigma = density.encode(Rng(11).normal(size=5))
        self.assertLess(np.max(np.abs(mu)), 0.1)
        assert_allclose(np.exp(log_sigma), 1.0 / (math.sqrt(2.0) * 4 ** 0.25), rtol=0.1)


class DirectSamplerTests(SimpleTestCase):

    def test_deterministic_and_rbf_at_init(self):
        sampler = DirectSampler(M=1, d=4, R=4096, rng=Rng(12), d_k=4)
        params = dict(sampler.parameters())
        first = sampler.samples(params, None, None)[0]
        second = sampler.samples(params, None, None)[0]
        assert_array_equal(first.points, second.points)
        self.assertIs(direct_points(params['spectral.direct.0']).points, params['spectral.direct.0'])
        rng = Rng(13)
        q, k = rng.uniform(0.0, 1.0, size=(2, 50, 4))
        gap = np.abs(kernel_squared(q, k, first) - rbf_closed_form(q, k, math.sqrt(2.0)))
        self.assertLessEqual(gap.max(), 0.05)


class CopulaSamplerTests(SimpleTestCase):

    def test_independent_copula_reproduces_independent_heads(self):
        densities = [ImplicitDensity(3, 2, Rng(20 + m)) for m in range(3)]
        h = Rng(30).normal(size=(2, 3))
        rng = Rng(31)
        joint = sample_copula_joint(CopulaSpec.independent(3), densities, h, 40, rng)
        for m, density in enumerate(densities):
            single = sample_implicit(h, density, 40, head_stream(rng, m))
            assert_array_equal(joint[m].points, single.points)
            assert_array_equal(joint[m].base, single.base)

    def _coupled_base(self, rho, M=2, R=100_000):
        spec = CopulaSpec.from_correlation(np.array([[1.0, rho], [rho, 1.0]]))
        densities = [standard_density(2, 1, seed=m) for m in range(M)]
        return sample_copula_joint(spec, densities, np.zeros(2), R, Rng(40))

    def test_positive_correlation(self):
        samples = self._coupled_base(0.8)
        self.assertAlmostEqual(np.corrcoef(samples[0].base.ravel(), samples[1].base.ravel())[0, 1], 0.8, delta=0.02)

    def test_negative_correlation_and_uniform_marginals(self):
        samples = self._coupled_base(-0.9)
        self.assertAlmostEqual(np.corrcoef(samples[0].base.ravel(), samples[1].base.ravel())[0, 1], -0.9, delta=0.02)
        for sample in samples:
            self.assertLessEqual(stats.kstest(sample.u.ravel(), 'uniform').statistic, 0.01)

    def test_marginals_keep_their_gaussian_moments(self):
        spec = CopulaSpec.from_correlation([[1.0, 0.6, 0.3], [0.6, 1.0, -0.2], [0.3, -0.2, 1.0]])
        mus, log_sigmas = (0.5, -1.0, 2.0), (0.0, math.log(0.3), math.log(2.0))
        densities = [standard_density(2, 1, mu, ls, seed=m) for m, (mu, ls) in enumerate(zip(mus, log_sigmas))]
        samples = sample_copula_joint(spec, densities, np.zeros(2), 100_000, Rng(41))
        for sample, mu, ls in zip(samples, mus, log_sigmas):
            sigma = math.exp(ls)
            base = sample.base.ravel()
            self.assertLessEqual(abs(base.mean() - mu), 0.01 * sigma)
            self.assertAlmostEqual(base.var() / sigma ** 2, 1.0, delta=0.03)

    def test_sampler_strategies_share_noise_streams(self):
        rng = Rng(42)
        independent = ImplicitSampler(M=2, d=3, R=8, input_dim=4, rng=Rng(43))
        coupled = CopulaSampler(M=2, d=3, R=8, input_dim=4, rng=Rng(43))
        h = Rng(44).normal(size=(5, 4))
        noise = independent.draw_noise((5,), rng)
        assert_array_equal(noise[1], coupled.draw_noise((5,), rng)[1])
        a = independent.samples(dict(independent.parameters()), h, noise)
        b = coupled.samples(dict(coupled.parameters()), h, noise)
        for left, right in zip(a, b):
            assert_array_equal(left.points, right.points)


class CopulaDensityTests(SimpleTestCase):

    def test_independence_copula_is_flat(self):
        for u in ([0.1, 0.7, 0.4], [0.99, 0.01, 0.5]):
            self.assertEqual(gaussian_copula_log_density(u, np.eye(3)), 0.0)

    def test_center_point(self):
        sigma = np.array([[1.0, 0.3], [0.3, 1.0]])
        self.assertAlmostEqual(gaussian_copula_log_density([0.5, 0.5], sigma), -0.5 * math.log(0.91), places=12)

    def test_matches_finite_difference_of_copula_cdf(self):
        rho, h = 0.8, 5e-4

        def C(u1, u2):
            return bivariate_normal_cdf(float(gauss_quantile(u1)), float(gauss_quantile(u2)), rho)

        fd = (C(0.9 + h, 0.9 + h) - C(0.9 + h, 0.9 - h) - C(0.9 - h, 0.9 + h) + C(0.9 - h, 0.9 - h)) / (4 * h * h)
        density = math.exp(gaussian_copula_log_density([0.9, 0.9], [[1.0, rho], [rho, 1.0]]))
        self.assertAlmostEqual(density, fd, delta=1e-4)

    def test_boundary_rejected(self):
        with self.assertRaises(DomainError):
            gaussian_copula_log_density([0.0, 0.5], np.eye(2))

    def test_log_term_matches_density_sum(self):
        spec = CopulaSpec.from_correlation([[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]])
        draws = [Rng(50 + m).standard_normal((6, 2)) for m in range(3)]
        coupled = couple(spec.factor(), draws)
        per_draw = gaussian_copula_log_density(
            gauss_cdf(np.stack([v.ravel() for v in coupled], axis=-1)), spec.correlation,
        )
        self.assertAlmostEqual(float(copula_log_term(spec.factor(), draws, coupled)), float(np.sum(per_draw)), places=6)
        identity = CopulaSpec.independent(3).factor()
        self.assertEqual(float(copula_log_term(identity, draws, couple(identity, draws))), 0.0)


class CopulaSpecTests(SimpleTestCase):

    def test_factor_reconstructs_correlation(self):
        sigma = np.array([[1.0, 0.8, -0.3], [0.8, 1.0, 0.1], [-0.3, 0.1, 1.0]])
        spec = CopulaSpec.from_correlation(sigma)
        assert_allclose(spec.correlation, sigma, atol=1e-10)

    def test_unconstrained_factor_gives_valid_correlation(self):
        spec = CopulaSpec(Rng(60).normal(size=(4, 4)) + 3 * np.eye(4))
        assert_allclose(np.diag(spec.correlation), 1.0, atol=1e-12)
        self.assertGreater(np.linalg.eigvalsh(spec.correlation).min(), 0.0)

    def test_invalid_inputs(self):
        with self.assertRaises(NotPositiveDefiniteError):
            CopulaSpec.from_correlation([[1.0, 1.2], [1.2, 1.0]])
        with self.assertRaises(DomainError):
            CopulaSpec.from_correlation([[2.0, 0.0], [0.0, 1.0]])


class CheckpointTests(SimpleTestCase):

    def test_density_and_copula_round_trip(self):
        density = ImplicitDensity(3, 2, Rng(70))
        spec = CopulaSpec.from_correlation([[1.0, 0.4], [0.4, 1.0]])
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'density.json', density_fields(density))
            restored = density_from_fields(load_checkpoint(path))
            copula_path = save_checkpoint(Path(tmp) / 'copula.json', copula_fields(spec))
            restored_spec = copula_from_fields(load_checkpoint(copula_path))
        h = Rng(71).normal(size=3)
        for left, right in zip(density.encode(h), restored.encode(h)):
            assert_array_equal(left, right)
        assert_array_equal(restored_spec.raw_factor, spec.raw_factor)

    def test_wrong_format_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.json'
            path.write_text('{"format": "other", "version": 1, "fields": []}')
            with self.assertRaises(CheckpointError):
                load_checkpoint(path)

    def test_components_from_model_checkpoint(self):
        sampler = CopulaSampler(2, 3, 4, 5, Rng(72), copula=CopulaSpec.from_correlation([[1.0, 0.3], [0.3, 1.0]]))
        fields = [('embedding', np.ones((2, 2)))] + sampler.parameters()
        with tempfile.TemporaryDirectory() as tmp:
            model_path = save_checkpoint(Path(tmp) / 'model-epoch0003.json', fields)
            paths = export_spectral_components(model_path, Path(tmp) / 'spectral', 'model')
            self.assertEqual([p.name for p in paths], ['model-density-head0.json', 'model-density-head1.json',
                                                       'model-copula.json'])
            head1 = density_from_fields(load_checkpoint(paths[1]))
            copula = copula_from_fields(load_checkpoint(paths[2]))
        h = Rng(73).normal(size=5)
        for left, right in zip(sampler.densities[1].encode(h), head1.encode(h)):
            assert_array_equal(left, right)
        assert_allclose(copula.correlation, sampler.copula.correlation, atol=1e-15)

        densities, copula = spectral_components([('spectral.direct.0', np.zeros((4, 3)))])
        self.assertEqual((densities, copula), ([], None))
        with self.assertRaises(CheckpointError):
            spectral_components([(f'spectral.head1.{name}', value) for name, value in sampler.densities[1].ordered_params()])
