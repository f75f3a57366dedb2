import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from attention.config import AttentionConfig
from autodiff.tape import value_of
from core.exceptions import DivergenceError, DomainError
from numerics.rng import Rng
from rff.features import periodic_closed_form, rbf_closed_form
from spectral.checkpoint import load_checkpoint
from spectral.densities import CopulaSpec, ImplicitDensity
from training.batches import LinearBatch, SequenceBatch
from training.elbo import elbo, evaluation_elbo, gaussian_kl, gaussian_log_prior, monte_carlo_kl
from training.gradients import check_model_gradients
from training.networks import LinearRegression, SequenceClassifier
from training.optim import SGD
from training.spectral_fit import density_kernel, fit_density
from training.trainer import TrainConfig, train

MARKER = 7


def marker_batch(rng, n=48, vocab=16, low=4, high=10):
    """Label 1 iff the marker token occurs; negatives never contain it."""
    tokens = np.zeros((n, high), dtype=np.int64)
    mask = np.zeros((n, high), dtype=bool)
    labels = np.arange(n) % 2
    for i in range(n):
        length = int(rng.integers(low, high + 1))
        seq = rng.integers(0, vocab - 1, size=length)
        seq = np.where(seq >= MARKER, seq + 1, seq)
        if labels[i]:
            seq[int(rng.integers(0, length))] = MARKER
        tokens[i, :length] = seq
        mask[i, :length] = True
    return SequenceBatch(tokens, mask, labels)


def tiny_classifier(variant, seed=0, **kwargs):
    defaults = dict(M=2, d_k=2, R=3, hidden=4)
    if variant in ('ikan', 'ikan-direct', 'mikan'):
        defaults['p'] = 1.5
    defaults.update(kwargs)
    config = AttentionConfig.for_variant(variant, **defaults)
    return SequenceClassifier(config, Rng(seed), vocab_size=6, d_model=4)


def tiny_batch():
    tokens = np.array([[1, 2, 3, 4], [5, 1, 1, 0], [2, 4, 0, 0]])
    mask = tokens > 0
    return SequenceBatch(tokens, mask, np.array([1, 0, 1]))


class GaussianKlTests(SimpleTestCase):

    def test_closed_form(self):
        self.assertEqual(float(gaussian_kl(np.zeros(3), np.zeros(3))), 0.0)
        self.assertAlmostEqual(float(gaussian_kl(np.ones(1), np.zeros(1))), 0.5, places=15)
        self.assertAlmostEqual(
            float(gaussian_kl(np.zeros(1), np.log([2.0]))), 0.5 * (4.0 - 1.0) - math.log(2.0), places=14
        )

    def test_identical_distributions(self):
        draws = Rng(1).standard_normal((1000, 2))
        self.assertAlmostEqual(float(monte_carlo_kl(np.zeros(2), np.zeros(2), draws)), 0.0, places=10)

    def test_monte_carlo_matches_closed_form(self):
        draws = Rng(2).standard_normal((40_000, 1))
        estimate = float(monte_carlo_kl(np.ones(1), np.zeros(1), draws)) / 40_000
        self.assertAlmostEqual(estimate, 0.5, delta=0.02)

    def test_elbo_never_exceeds_exact_evidence(self):
        # y ~ N(z, 1), z ~ N(0, 1): p(y) = N(y; 0, 2) and the posterior is N(y/2, 1/2)
        y = 0.8
        exact = -0.25 * y * y - 0.5 * math.log(4.0 * math.pi)
        draws = Rng(3).standard_normal((4000, 1))
        for mean, std in ((0.0, 1.0), (y / 2, math.sqrt(0.5)), (1.5, 0.3)):
            per_draw = []
            for eps in draws:
                z = mean + std * eps
                log_lik = -0.5 * float((y - z[0]) ** 2) - 0.5 * math.log(2.0 * math.pi)
                kl = float(monte_carlo_kl(np.array([mean]), np.log([std]), eps[None, :]))
                per_draw.append(log_lik - kl)
            per_draw = np.array(per_draw)
            error = per_draw.std() / math.sqrt(len(per_draw))
            self.assertLessEqual(per_draw.mean(), exact + 3.0 * error + 1e-12)
            if mean == y / 2:
                assert_allclose(per_draw, exact, rtol=0, atol=1e-12)

    def test_log_prior(self):
        self.assertAlmostEqual(float(gaussian_log_prior(np.zeros((2, 3)))), -3.0 * math.log(2.0 * math.pi), places=14)


class ElboTests(SimpleTestCase):

    def test_fixed_kernels_use_plain_log_likelihood(self):
        for variant in ('dot', 'ikan-direct'):
            model = tiny_classifier(variant)
            terms, _ = elbo(model, model.initial_params(), tiny_batch(), rng=Rng(4))
            self.assertEqual(float(terms.elbo), float(terms.log_lik))
            self.assertEqual((terms.log_prior, terms.log_q), (0.0, 0.0))

    def test_identity_copula_reproduces_independent_heads(self):
        batch = tiny_batch()
        ikan = tiny_classifier('ikan', seed=5)
        mikan = tiny_classifier('mikan', seed=5)
        for analytic in (False, True):
            a, _ = elbo(ikan, ikan.initial_params(), batch, rng=Rng(6), analytic_kl=analytic)
            b, _ = elbo(mikan, mikan.initial_params(), batch, rng=Rng(6), analytic_kl=analytic)
            self.assertEqual(float(a.elbo), float(b.elbo))
            self.assertEqual(float(b.copula), 0.0)

    def test_correlated_copula_adds_a_term(self):
        copula = CopulaSpec.from_correlation([[1.0, 0.6], [0.6, 1.0]])
        model = tiny_classifier('mikan', copula=copula)
        terms, _ = elbo(model, model.initial_params(), tiny_batch(), rng=Rng(7), analytic_kl=True)
        self.assertGreater(float(terms.copula), 0.0)
        self.assertAlmostEqual(float(terms.elbo), float(terms.log_lik - terms.kl), places=12)

    def test_evaluation_average(self):
        model = tiny_classifier('ika-s')
        mean, error = evaluation_elbo(model, model.initial_params(), tiny_batch(), Rng(8), samples=16)
        self.assertTrue(np.isfinite(mean))
        self.assertGreater(error, 0.0)

    def test_parameter_counts(self):
        ikan, mikan = tiny_classifier('ikan'), tiny_classifier('mikan')
        self.assertEqual(mikan.parameter_count() - ikan.parameter_count(), 4)
        self.assertLess(tiny_classifier('dot').parameter_count(), tiny_classifier('ikan-direct').parameter_count())
        names = [name for name, _ in mikan.parameters()]
        self.assertEqual(names[0], 'embedding')
        self.assertEqual(names[-1], 'spectral.copula.raw_factor')


class OptimizerTests(SimpleTestCase):

    def test_plain_step(self):
        params = {'w': np.array([1.0, -2.0]), 'b': np.array([0.5])}
        grads = {'w': np.array([0.25, 4.0]), 'b': np.array([-1.0])}
        updated = SGD(0.1).step(params, grads)
        assert_array_equal(updated['w'], params['w'] - 0.1 * grads['w'])
        assert_array_equal(updated['b'], params['b'] - 0.1 * grads['b'])

    def test_momentum(self):
        opt = SGD(0.5, momentum=0.9)
        params = {'w': np.zeros(1)}
        params = opt.step(params, {'w': np.ones(1)})
        params = opt.step(params, {'w': np.ones(1)})
        assert_allclose(params['w'], [-0.5 - 0.5 * 1.9], rtol=0, atol=1e-15)

    def test_validation(self):
        with self.assertRaises(DomainError):
            SGD(-0.1)
        with self.assertRaises(DomainError):
            SGD(0.1, momentum=1.0)


class TrainerTests(SimpleTestCase):

    def test_zero_learning_rate_is_a_no_op(self):
        model = tiny_classifier('dot')
        result = train(model, tiny_batch(), TrainConfig(epochs=4, lr=0.0, momentum=0.0), Rng(9))
        for name, value in model.initial_params().items():
            assert_array_equal(result.params[name], value)
        losses = {record.loss for record in result.records}
        self.assertEqual(len(losses), 1)

    def test_same_seed_same_log(self):
        runs = [
            train(tiny_classifier('mikan', seed=10), tiny_batch(), TrainConfig(epochs=3, lr=0.05), Rng(11)).rows()
            for _ in range(2)
        ]
        self.assertEqual(runs[0], runs[1])

    def test_checkpoints_follow_registration_order(self):
        model = tiny_classifier('ika-ns')
        with tempfile.TemporaryDirectory() as tmp:
            config = TrainConfig(epochs=2, lr=0.01, checkpoint_dir=Path(tmp), checkpoint_every=1)
            result = train(model, tiny_batch(), config, Rng(12), name='ikans')
            self.assertEqual(result.checkpoint_path.name, 'ikans-epoch0002.json')
            fields = load_checkpoint(result.checkpoint_path)
            self.assertEqual([name for name, _ in fields], [name for name, _ in model.parameters()])
            for name, value in fields:
                assert_array_equal(value, result.params[name])

    def test_divergence_reports_last_checkpoint(self):
        rng = Rng(13)
        batch = LinearBatch(rng.normal(size=(20, 3)), rng.normal(size=20))
        model = LinearRegression(3, rng)
        with tempfile.TemporaryDirectory() as tmp:
            config = TrainConfig(epochs=5, lr=1e200, momentum=0.0, checkpoint_dir=Path(tmp), checkpoint_every=1)
            with np.errstate(over='ignore', invalid='ignore'):
                with self.assertRaises(DivergenceError) as caught:
                    train(model, batch, config, rng)
            self.assertEqual(caught.exception.epoch, 2)
            self.assertEqual(Path(caught.exception.checkpoint_path).name, 'model-epoch0001.json')

    def test_direct_points_learn_marker_task(self):
        rng = Rng(14)
        batch = marker_batch(rng.child('data'))
        config = AttentionConfig(variant='ikan-direct', M=2, d_k=8, R=16, p=2.0)
        model = SequenceClassifier(config, rng.child('model'))
        result = train(model, batch, TrainConfig(epochs=200, lr=0.1, momentum=0.9), rng.child('train'))
        self.assertGreaterEqual(result.final.metric, 0.95)
        self.assertTrue(np.isfinite(result.final.max_similarity))


class ModelGradcheckTests(SimpleTestCase):

    def test_linear_regression(self):
        rng = Rng(15)
        batch = LinearBatch(rng.normal(size=(10, 3)), rng.normal(size=10))
        report = check_model_gradients(LinearRegression(3, rng), batch, rng, scale=0.0)
        self.assertLessEqual(report.max_relative_error, 1e-7)

    def test_every_variant_full_path(self):
        correlated = CopulaSpec.from_correlation([[1.0, 0.5], [0.5, 1.0]])
        for variant in ('dot', 'ika-s', 'ika-ns', 'ikan', 'ikan-direct', 'mikan'):
            extra = {'copula': correlated} if variant == 'mikan' else {}
            model = tiny_classifier(variant, seed=16, **extra)
            report = check_model_gradients(model, tiny_batch(), Rng(17))
            self.assertLessEqual(report.max_relative_error, 1e-4, msg=f"{variant}: worst {report.worst}")
            self.assertGreater(report.checked, 0)

    def test_analytic_kl_path(self):
        model = tiny_classifier('mikan', copula=CopulaSpec.from_correlation([[1.0, -0.4], [-0.4, 1.0]]))
        report = check_model_gradients(model, tiny_batch(), Rng(18), analytic_kl=True)
        self.assertLessEqual(report.max_relative_error, 1e-4)


class SpectralFitTests(SimpleTestCase):

    def test_generator_bends_away_from_rbf(self):
        rng = Rng(19)
        density = ImplicitDensity(1, 1, rng.child('density'), hidden=8, d_k=1)
        train_offsets = np.linspace(0.0, 3.0, 31)[:, None]

        def periodic(offsets):
            return periodic_closed_form(offsets, np.zeros_like(offsets), period=2.0)

        fit = fit_density(density, periodic, train_offsets, rng.child('fit'), steps=500)
        self.assertLess(np.mean(fit.losses[-20:]), 0.8 * np.mean(fit.losses[:20]))

        held_out = np.linspace(0.05, 2.95, 30)[:, None]
        eps = rng.child('eval').standard_normal((20_000, 1))
        fitted = np.asarray(value_of(density_kernel(density, fit.params, np.ones(1), eps, held_out)))
        rbf = rbf_closed_form(held_out, np.zeros_like(held_out), math.sqrt(2.0))
        self.assertGreater(np.max(np.abs(fitted - rbf)), 0.05)
