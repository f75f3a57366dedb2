import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from autodiff import ops
from autodiff.gradcheck import gradcheck
from autodiff.tape import Node, Tape, backward
from core.exceptions import NonFiniteError, ShapeMismatchError
from numerics.rng import Rng
from numerics.special import stable_softmax


class BackwardTests(SimpleTestCase):

    def test_sum_of_squares(self):
        tape = Tape()
        x = tape.variable([1.0, -2.0, 3.5], 'x')
        grads = backward(ops.sum(x * x))
        assert_allclose(grads['x'], [2.0, -4.0, 7.0])

    def test_softmax_cross_entropy(self):
        logits = np.array([0.3, -1.2, 2.0, 0.5])
        target = 2
        tape = Tape()
        z = tape.variable(logits, 'logits')
        loss = -ops.log_softmax(z)[target]
        grads = tape.backward(loss)
        expected = stable_softmax(logits)
        expected[target] -= 1.0
        assert_allclose(grads['logits'], expected, atol=1e-14)

    def test_softmax_then_log_matches_log_softmax(self):
        tape = Tape()
        z = tape.variable([0.1, 0.7, -0.4], 'z')
        loss = -ops.log(ops.softmax(z))[0]
        grads = tape.backward(loss)
        expected = stable_softmax([0.1, 0.7, -0.4])
        expected[0] -= 1.0
        assert_allclose(grads['z'], expected, atol=1e-14)

    def test_broadcast_gradient_is_summed(self):
        tape = Tape()
        bias = tape.variable([1.0, 2.0], 'bias')
        grads = tape.backward(ops.sum(np.ones((3, 2)) * 2.0 + bias))
        assert_allclose(grads['bias'], [3.0, 3.0])

    def test_unused_leaf_gets_zero_gradient(self):
        tape = Tape()
        x = tape.variable(2.0, 'x')
        tape.variable([1.0, 1.0], 'unused')
        grads = tape.backward(x * 3.0)
        assert_allclose(grads['unused'], [0.0, 0.0])
        self.assertAlmostEqual(float(grads['x']), 3.0)

    def test_non_finite_gradient_names_node(self):
        tape = Tape()
        x = tape.variable([0.0, 1.0], 'x')
        with self.assertRaises(NonFiniteError) as ctx:
            tape.backward(ops.sum(ops.sqrt(x)))
        self.assertIn('sqrt', str(ctx.exception))

    def test_non_finite_loss_rejected(self):
        tape = Tape()
        x = tape.variable([0.0], 'x')
        with self.assertRaises(NonFiniteError):
            tape.backward(ops.sum(ops.log(x)))


class DualModeTests(SimpleTestCase):

    def test_plain_arrays_are_not_recorded(self):
        out = ops.exp(ops.matmul(np.eye(2), np.ones((2, 1))))
        self.assertIsInstance(out, np.ndarray)
        self.assertNotIsInstance(out, Node)

    def test_matmul_shape_error_names_both(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            ops.matmul(np.ones((2, 3)), np.ones((4, 2)))
        self.assertIn('(2, 3) vs (4, 2)', str(ctx.exception))

    def test_numpy_scalar_on_left_defers_to_node(self):
        tape = Tape()
        x = tape.variable([1.0, 2.0], 'x')
        self.assertIsInstance(np.float64(2.0) * x, Node)
        self.assertIsInstance(np.ones(2) - x, Node)


class GradcheckTests(SimpleTestCase):

    def test_linear_regression(self):
        rng = Rng(0)
        X = rng.normal(size=(20, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=20)

        def loss_fn(p):
            residual = ops.matmul(X, p['w']) + p['b'] - y[:, None]
            return ops.mean(residual * residual)

        report = gradcheck(loss_fn, {'w': rng.normal(size=(3, 1)), 'b': np.array([0.3])})
        self.assertLessEqual(report.max_relative_error, 1e-7)
        self.assertEqual(report.checked, 4)

    def test_composite_primitives(self):
        rng = Rng(1)
        mask = np.array([[True, True, False], [True, True, True]])
        idx = np.array([2, 0, 2])

        def loss_fn(p):
            a = ops.tanh(ops.matmul(p['x'], p['w']))
            lifted = ops.concatenate([a, ops.cos(a), ops.sin(a)], axis=-1)
            norms = ops.lp_norm(lifted, 0.7)
            stacked = ops.stack([norms, ops.square(norms)], axis=0)
            weights = ops.softmax(ops.swapaxes(p['x'], 0, 1)[:2, :3] * 1.5, mask=mask)
            picked = ops.getitem(p['w'], (idx, slice(None)))
            return (ops.sum(stacked * 0.1) + ops.sum(weights * weights)
                    + ops.logsumexp(ops.reshape(picked, (-1,)), axis=-1)
                    + ops.sum(ops.where(p['w'] > 0, p['w'], 0.3 * p['w']) ** 2))

        report = gradcheck(loss_fn, {'x': rng.normal(size=(3, 4)), 'w': rng.normal(size=(4, 3))})
        self.assertLessEqual(report.max_relative_error, 1e-6)

    def test_large_parameters_are_skipped(self):
        report = gradcheck(lambda p: ops.sum(p['x'] * 1.0), {'x': np.array([1.0, 5e3])})
        self.assertEqual(report.skipped, [('x', (1,))])
        self.assertEqual(report.checked, 1)
