import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from attention.config import AttentionConfig, Mode, Variant, make_sampler
from attention.diagnostics import diagnostics
from attention.export import weight_rows
from attention.layers import GraphMask, attend_graph, attend_sequence
from core.exceptions import DomainError, EmptyRowError, NonFiniteError, ShapeMismatchError
from numerics.rng import Rng
from numerics.special import stable_softmax
from spectral.densities import CopulaSpec
from spectral.samplers import sample_gaussian

ALL_VARIANTS = [v.value for v in Variant]


def projections(rng, M, d_model, d_k, d_v=None):
    scale = 1.0 / math.sqrt(d_model)
    return {
        'W_Q': rng.normal(0.0, scale, size=(M, d_model, d_k)),
        'W_K': rng.normal(0.0, scale, size=(M, d_model, d_k)),
        'W_V': rng.normal(0.0, scale, size=(M, d_model, d_v or d_k)),
    }


def draw_samples(config, spectral_dim, h, rng):
    sampler = make_sampler(config, spectral_dim, h.shape[-1], rng.child('sampler'))
    if sampler is None:
        return None
    h_summary = np.mean(h, axis=-2)
    noise = sampler.draw_noise(h_summary.shape[:-1], rng.child('noise'))
    return sampler.samples(dict(sampler.parameters()), h_summary, noise)


def run_sequence(variant, h, rng, M=2, d_k=4, mask=None, **kwargs):
    config = AttentionConfig.for_variant(variant, M=M, d_k=d_k, R=8, **kwargs)
    params = projections(rng.child('proj'), M, h.shape[-1], d_k)
    samples = draw_samples(config, d_k, h, rng)
    return attend_sequence(h, params, config, samples, mask=mask), params


class AttentionConfigTests(SimpleTestCase):

    def test_copula_presence(self):
        with self.assertRaises(DomainError):
            AttentionConfig(variant='mikan', M=2)
        with self.assertRaises(DomainError):
            AttentionConfig(variant='ikan', M=2, copula=CopulaSpec.independent(2))
        with self.assertRaises(DomainError):
            AttentionConfig(variant='mikan', M=3, copula=CopulaSpec.independent(2))
        config = AttentionConfig.for_variant('mikan', M=3)
        self.assertEqual(config.copula.M, 3)

    def test_baselines_use_l2(self):
        for variant in ('dot', 'rbf-only', 'expsin', 'linear'):
            with self.assertRaises(DomainError):
                AttentionConfig(variant=variant, p=1.0)
        self.assertEqual(AttentionConfig(variant='ikan', p=0.5).p, 0.5)

    def test_rejects_unknown_values(self):
        with self.assertRaises(DomainError):
            AttentionConfig(variant='softmax')
        with self.assertRaises(DomainError):
            AttentionConfig(c=0.0)
        with self.assertRaises(DomainError):
            AttentionConfig(variant='ikan', p=0.0)

    def test_flags(self):
        self.assertTrue(AttentionConfig(variant='ikan').nonstationary)
        self.assertFalse(AttentionConfig(variant='ikan-direct').latent)
        self.assertTrue(AttentionConfig(variant='ika-s').uses_kernel)
        self.assertFalse(AttentionConfig(variant='linear').uses_kernel)


class SequenceAttentionTests(SimpleTestCase):

    def test_dot_matches_textbook_softmax(self):
        rng = Rng(1)
        h = rng.normal(size=(7, 12))
        out, params = run_sequence('dot', h, rng, M=2, d_k=4)
        for m in range(2):
            q, k = h @ params['W_Q'][m], h @ params['W_K'][m]
            expected = stable_softmax(q @ k.T / 2.0)
            assert_allclose(out.weights[m], expected, rtol=0, atol=1e-12)
            assert_allclose(out.context[m], expected @ (h @ params['W_V'][m]), rtol=0, atol=1e-12)

    def test_single_key_gives_unit_weight(self):
        for variant in ALL_VARIANTS:
            rng = Rng(2)
            out, _ = run_sequence(variant, rng.normal(size=(1, 6)), rng)
            assert_allclose(out.weights, np.ones((2, 1, 1)), rtol=0, atol=1e-15, err_msg=variant)

    def test_rows_are_stochastic_for_every_variant(self):
        for variant in ALL_VARIANTS:
            rng = Rng(3)
            out, _ = run_sequence(variant, rng.normal(size=(3, 9, 6)), rng, p=2.0 if variant in (
                'dot', 'rbf-only', 'expsin', 'linear', 'ika-s', 'ika-ns') else 0.7)
            self.assertEqual(out.weights.shape, (3, 2, 9, 9))
            self.assertTrue(np.all(out.weights >= 0.0), msg=variant)
            assert_allclose(out.weights.sum(axis=-1), 1.0, rtol=0, atol=1e-10, err_msg=variant)

    def test_rbf_only_drops_the_magnitude(self):
        rng = Rng(4)
        h = rng.normal(size=(6, 8))
        out, params = run_sequence('rbf-only', h, rng, M=1, d_k=4)
        q, k = h @ params['W_Q'][0], h @ params['W_K'][0]
        distance = np.sum((q[:, None, :] - k[None, :, :]) ** 2, axis=-1)
        assert_allclose(out.weights[0], stable_softmax(-distance / 4.0), rtol=0, atol=1e-12)

    def test_gaussian_kernel_approaches_dot(self):
        rng = Rng(5)
        d_k = 4
        h = 0.5 * rng.normal(size=(6, 8))
        config = AttentionConfig(variant='ika-s', M=1, d_k=d_k, R=100_000)
        params = projections(rng.child('proj'), 1, 8, d_k)
        samples = [sample_gaussian(d_k, 100_000, d_k ** 0.25, rng.child('points'))]
        kernel = attend_sequence(h, params, config, samples)
        dot = attend_sequence(h, params, AttentionConfig(variant='dot', M=1, d_k=d_k))
        self.assertLessEqual(np.max(np.abs(kernel.weights - dot.weights)), 0.02)

    def test_masking(self):
        rng = Rng(6)
        causal = np.tril(np.ones((5, 5), dtype=bool))
        for variant in ('dot', 'ikan', 'mikan'):
            out, _ = run_sequence(variant, rng.normal(size=(5, 6)), rng, mask=causal)
            self.assertTrue(np.all(out.weights[:, ~causal] == 0.0), msg=variant)
            assert_allclose(out.weights.sum(axis=-1), 1.0, rtol=0, atol=1e-10)
        blocked = np.ones((3, 3), dtype=bool)
        blocked[1] = False
        with self.assertRaises(EmptyRowError):
            run_sequence('dot', rng.normal(size=(3, 6)), rng, mask=blocked)

    def test_permutation_equivariance(self):
        rng = Rng(7)
        h = rng.normal(size=(8, 6))
        perm = rng.permutation(8)
        for variant in ('dot', 'ikan-direct', 'ika-ns'):
            out, _ = run_sequence(variant, h, Rng(70))
            permuted, _ = run_sequence(variant, h[perm], Rng(70))
            if variant == 'ika-ns':
                # the pooled context, hence the sample, is unchanged up to summation order
                atol = 1e-12
            else:
                atol = 1e-14
            assert_allclose(permuted.weights, out.weights[:, perm][:, :, perm], rtol=0, atol=atol, err_msg=variant)

    def test_larger_key_norm_wins_at_equal_similarity(self):
        identity = {'W_Q': np.eye(2)[None], 'W_K': np.eye(2)[None], 'W_V': np.eye(2)[None]}
        queries = np.array([[1.0, 0.0], [1.0, 3.0], [1.0, -1.5]])
        keys = np.array([[0.0, 0.0], [2.0, 0.0]])
        dot = attend_sequence(queries, identity, AttentionConfig(M=1, d_k=2), memory=keys)
        self.assertTrue(np.all(dot.weights[0, :, 1] > dot.weights[0, :, 0]))
        rbf = attend_sequence(queries, identity, AttentionConfig(variant='rbf-only', M=1, d_k=2), memory=keys)
        assert_allclose(rbf.weights[0], 0.5, rtol=0, atol=1e-15)

    def test_non_finite_input_names_head_and_row(self):
        rng = Rng(8)
        params = projections(rng, 1, 4, 4)
        h = rng.normal(size=(4, 4))
        h[2, 0] = np.inf
        with np.errstate(invalid='ignore', over='ignore'):
            with self.assertRaises(NonFiniteError) as caught:
                attend_sequence(h, params, AttentionConfig(M=1, d_k=4), memory=rng.normal(size=(5, 4)))
        self.assertEqual(caught.exception.location, 'head 0, row 2')

    def test_shape_errors(self):
        rng = Rng(9)
        params = projections(rng, 2, 6, 4)
        with self.assertRaises(ShapeMismatchError):
            attend_sequence(rng.normal(size=(3, 5)), params, AttentionConfig(M=2, d_k=4))
        with self.assertRaises(ShapeMismatchError):
            attend_sequence(rng.normal(size=(3, 6)), params, AttentionConfig(M=2, d_k=8))
        with self.assertRaises(DomainError):
            attend_sequence(rng.normal(size=(3, 6)), params, AttentionConfig(variant='ikan', M=2, d_k=4))

    def test_cross_attention_with_direct_values(self):
        rng = Rng(10)
        params = projections(rng, 2, 3, 4)
        values = rng.normal(size=(5, 1))
        out = attend_sequence(rng.normal(size=(4, 3)), params, AttentionConfig(M=2, d_k=4),
                              memory=rng.normal(size=(5, 3)), values=values)
        self.assertEqual(out.context.shape, (2, 4, 1))
        assert_allclose(out.context, out.weights @ values, rtol=0, atol=1e-15)


class GraphAttentionTests(SimpleTestCase):

    def _graph(self, rng, n=10, p=0.3):
        upper = np.triu(rng.random((n, n)) < p, 1)
        return GraphMask.from_adjacency(upper | upper.T)

    def _params(self, rng, M, d_in, d_head):
        return {
            'W': rng.normal(0.0, 1.0 / math.sqrt(d_in), size=(M, d_in, d_head)),
            'a': rng.normal(0.0, 1.0, size=(M, 2 * d_head)),
        }

    def test_dot_matches_leaky_relu_softmax(self):
        rng = Rng(11)
        mask = self._graph(rng)
        h = rng.normal(size=(10, 5))
        params = self._params(rng, 2, 5, 3)
        config = AttentionConfig(M=2, d_k=3, c=0.2, mode=Mode.GRAPH)
        out = attend_graph(h, params, mask, config)
        for m in range(2):
            Wh = h @ params['W'][m]
            pre = (Wh @ params['a'][m, :3])[:, None] + (Wh @ params['a'][m, 3:])[None, :]
            scores = np.where(pre >= 0, pre, 0.2 * pre)
            expected = stable_softmax(scores, mask=mask.adjacency)
            assert_allclose(out.weights[m], expected, rtol=0, atol=1e-10)
            assert_allclose(out.context[m], expected @ Wh, rtol=0, atol=1e-10)

    def test_non_neighbors_get_zero(self):
        rng = Rng(12)
        mask = self._graph(rng)
        config = AttentionConfig(variant='ika-s', M=2, d_k=3, mode='graph', R=16)
        h = rng.normal(size=(10, 5))
        samples = [sample_gaussian(6, 16, 1.0, rng.child(f'p{m}'), head=m) for m in range(2)]
        out = attend_graph(h, self._params(rng, 2, 5, 3), mask, config, samples)
        self.assertTrue(np.all(out.weights[:, ~mask.adjacency] == 0.0))
        assert_allclose(out.weights.sum(axis=-1), 1.0, rtol=0, atol=1e-10)

    def test_star_graph_with_identical_features_is_uniform(self):
        n = 6
        neighbors = [list(range(n))] + [[0] for _ in range(n - 1)]
        mask = GraphMask.from_neighbors(neighbors)
        h = np.tile(Rng(13).normal(size=(1, 4)), (n, 1))
        out = attend_graph(h, self._params(Rng(14), 1, 4, 2), mask, AttentionConfig(M=1, d_k=2, mode='graph'))
        assert_allclose(out.weights[0, 0], np.full(n, 1.0 / n), rtol=0, atol=1e-15)
        for i in range(1, n):
            assert_allclose(out.weights[0, i, [0, i]], [0.5, 0.5], rtol=0, atol=1e-15)

    def test_kernel_factors_approach_gat(self):
        rng = Rng(15)
        mask = self._graph(rng, n=6, p=0.5)
        h = 0.5 * rng.normal(size=(6, 4))
        params = self._params(rng, 1, 4, 2)
        samples = [sample_gaussian(4, 100_000, 1.0, rng.child('points'))]
        kernel = attend_graph(h, params, mask, AttentionConfig(variant='ika-s', M=1, d_k=2, mode='graph'), samples)
        dot = attend_graph(h, params, mask, AttentionConfig(M=1, d_k=2, mode='graph'))
        self.assertLessEqual(np.max(np.abs(kernel.weights - dot.weights)), 0.02)

    def test_missing_self_loop(self):
        with self.assertRaises(DomainError):
            GraphMask(np.array([[True, True], [True, False]]))
        with self.assertRaises(DomainError):
            GraphMask.from_neighbors([[1], [0]], self_loops=False)
        self.assertEqual(GraphMask.from_neighbors([[1], [0]]).neighbors(0), [0, 1])

    def test_mode_and_size_checks(self):
        rng = Rng(16)
        params = self._params(rng, 1, 4, 2)
        mask = GraphMask.from_adjacency(np.zeros((3, 3)))
        with self.assertRaises(DomainError):
            attend_graph(rng.normal(size=(3, 4)), params, mask, AttentionConfig(M=1, d_k=2))
        with self.assertRaises(ShapeMismatchError):
            attend_graph(rng.normal(size=(4, 4)), params, mask, AttentionConfig(M=1, d_k=2, mode='graph'))
        with self.assertRaises(DomainError):
            attend_graph(rng.normal(size=(3, 4)), params, mask, AttentionConfig(variant='linear', M=1, d_k=2, mode='graph'))


class DiagnosticsTests(SimpleTestCase):

    def test_identical_heads_have_no_spread(self):
        rng = Rng(17)
        single = projections(rng, 1, 6, 4)
        doubled = {name: np.concatenate([w, w]) for name, w in single.items()}
        out = attend_sequence(rng.normal(size=(5, 6)), doubled, AttentionConfig(M=2, d_k=4))
        report = diagnostics(out)
        self.assertLess(report.cross_head_std, 1e-15)
        self.assertAlmostEqual(report.heads[0].max_similarity, report.heads[1].max_similarity, places=15)

    def test_uniform_rows_have_maximal_entropy(self):
        h = np.tile(Rng(18).normal(size=(1, 6)), (7, 1))
        out, _ = run_sequence('dot', h, Rng(19))
        report = diagnostics(out)
        assert_allclose(report.row_entropy, math.log(7), rtol=0, atol=1e-12)

    def test_similarity_range_for_rbf_family(self):
        for variant in ('dot', 'rbf-only'):
            out, _ = run_sequence(variant, Rng(20).normal(size=(9, 6)), Rng(21))
            report = diagnostics(out)
            for head in report.heads:
                self.assertGreater(head.max_similarity, 0.0)
                self.assertLessEqual(head.max_similarity, 1.0)
            self.assertEqual(report.row_max_similarity.shape, (2, 9))

    def test_export(self):
        out, _ = run_sequence('ikan', Rng(22).normal(size=(4, 6)), Rng(23), mask=np.tril(np.ones((4, 4), dtype=bool)), p=1.0)
        rows = weight_rows(out)
        self.assertEqual(len(rows), 2 * 10)
        self.assertEqual(set(rows[0]), {'batch', 'head', 'row', 'col', 'value'})
        self.assertEqual(len(weight_rows(out, include_masked=True)), 2 * 16)
        self.assertEqual(weight_rows(out, batch_index=0), rows)
        self.assertEqual(weight_rows(out, batch_index=1), [])
