from django.test import SimpleTestCase

from core.exceptions import (
    DivergenceError, DomainError, KernelAttentionError, NonFiniteError, NotPositiveDefiniteError,
    ShapeMismatchError,
)


class ExceptionTests(SimpleTestCase):

    def test_messages_carry_context(self):
        error = ShapeMismatchError("Cannot multiply", (2, 3), (4, 5))
        self.assertEqual(str(error), "Cannot multiply: (2, 3) vs (4, 5)")
        self.assertEqual(error.right_shape, (4, 5))
        self.assertIn('head 1', str(NonFiniteError("NaN weight", location='head 1')))
        self.assertEqual(NotPositiveDefiniteError(2, -0.5).pivot, 2)

    def test_divergence_names_checkpoint(self):
        error = DivergenceError(7, 'runs/model-epoch0006.json')
        self.assertEqual(error.epoch, 7)
        self.assertTrue(str(error).endswith('model-epoch0006.json'))
        self.assertEqual(str(DivergenceError(1)), "Training diverged at epoch 1")

    def test_hierarchy(self):
        for error in (DomainError('x'), ShapeMismatchError('x')):
            self.assertIsInstance(error, KernelAttentionError)
            self.assertIsInstance(error, ValueError)
