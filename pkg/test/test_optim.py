import unittest

import numpy as np

from shiftlab.errors import ShiftLabConfigError
from shiftlab.optim import sgd_step, zero_grad
from shiftlab.tensor import Param


class SgdStep(unittest.TestCase):
    def setUp(self):
        self.w = Param(np.array([1.0, -2.0]), 'w')
        self.b = Param(np.array([0.5]), 'b', decay=False)
        self.w.grad[...] = [0.5, 0.5]
        self.b.grad[...] = [1.0]

    def test_plain_step(self):
        sgd_step([self.w, self.b], lr=0.1)
        np.testing.assert_allclose(self.w.data, [0.95, -2.05])
        np.testing.assert_allclose(self.b.data, [0.4])

    def test_l2_only_on_decayed(self):
        sgd_step([self.w, self.b], lr=0.1, l2=0.5)
        np.testing.assert_allclose(self.w.data, [1.0 - 0.1 * (0.5 + 0.5), -2.0 - 0.1 * (0.5 - 1.0)])
        np.testing.assert_allclose(self.b.data, [0.4], err_msg='Biases must not be decayed')

    def test_zero_lr_is_identity(self):
        before = self.w.data.copy()
        sgd_step([self.w], lr=0.0, l2=0.1)
        np.testing.assert_array_equal(self.w.data, before)

    def test_zeroes_gradients(self):
        sgd_step([self.w, self.b], lr=0.1)
        np.testing.assert_array_equal(self.w.grad, 0.0)
        np.testing.assert_array_equal(self.b.grad, 0.0)

    def test_negative_lr(self):
        with self.assertRaises(ShiftLabConfigError) as context:
            sgd_step([self.w], lr=-0.1)
        self.assertEqual(context.exception.key, 'train.lr')

    def test_momentum(self):
        velocity = {}
        sgd_step([self.w], lr=1.0, momentum=0.9, velocity=velocity)
        np.testing.assert_allclose(self.w.data, [0.5, -2.5])
        self.w.grad[...] = [0.5, 0.5]
        sgd_step([self.w], lr=1.0, momentum=0.9, velocity=velocity)
        np.testing.assert_allclose(self.w.data, [0.5 - 0.95, -2.5 - 0.95])

    def test_momentum_needs_velocity(self):
        with self.assertRaises(ShiftLabConfigError):
            sgd_step([self.w], lr=0.1, momentum=0.5)

    def test_zero_grad(self):
        zero_grad([self.w, self.b])
        np.testing.assert_array_equal(self.w.grad, 0.0)
        np.testing.assert_array_equal(self.b.grad, 0.0)
