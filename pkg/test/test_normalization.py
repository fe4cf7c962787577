import unittest

import numpy as np

from shiftlab.errors import ShiftLabBatchError, ShiftLabConfigError, ShiftLabDimensionError
from shiftlab.normalization import (NormKind, NormState, _standardize, batch_norm, dan_norm, group_norm, make_norm,
                                    trans_norm, transferability_alpha, weight_standardize)
from shiftlab.optim import grad_check
from shiftlab.tensor import Param, Tensor, linear_forward, sum_all

TOLERANCE = 1e-4


def weighted_sum(out: Tensor, weights: np.ndarray, tape):
    """
    A scalar with a non-trivial gradient for every output entry
    """
    return sum_all(linear_forward(out, Tensor(weights), Tensor(np.zeros(weights.shape[1])), tape), tape)


class NormTestBase(unittest.TestCase):
    channels = 4

    def setUp(self):
        self.rng = np.random.default_rng(42)
        self.x = Param(self.rng.normal(5.0, 3.0, size=(8, self.channels)), 'x')
        self.mask = np.array([True] * 4 + [False] * 4)
        self.weights = self.rng.normal(size=(self.channels, 3))
        self.state = NormState(self.channels, 'norm')
        self.state.gamma.data[...] = self.rng.uniform(0.5, 1.5, size=self.channels)
        self.state.beta.data[...] = self.rng.normal(size=self.channels)

    def check_gradient(self, forward, params):
        def loss(tape):
            return weighted_sum(forward(tape), self.weights, tape)

        self.assertLess(grad_check(loss, params), TOLERANCE, 'The gradient does not match central differences')


class BatchNorm(NormTestBase):
    def test_statistics(self):
        out = batch_norm(Tensor(self.x.data), NormState(self.channels, 'bn'), True, None)
        self.assertLess(np.abs(out.data.mean(axis=0)).max(), 1e-10, 'Every channel should have zero mean')
        self.assertLess(np.abs(out.data.var(axis=0) - 1).max(), 1e-5, 'Every channel should have unit variance')

    def test_gradient(self):
        self.check_gradient(lambda tape: batch_norm(self.x, self.state, True, tape, update_running=False),
                            [self.x, self.state.gamma, self.state.beta])

    def test_single_row(self):
        with self.assertRaises(ShiftLabBatchError) as context:
            batch_norm(Tensor(np.ones((1, self.channels))), self.state, True, None)
        self.assertIn('batch too small for batch statistics', str(context.exception))

    def test_running_statistics(self):
        state = NormState(self.channels, 'bn', momentum=1.0)
        batch_norm(Tensor(self.x.data), state, True, None)
        np.testing.assert_allclose(state.running_mean_src, self.x.data.mean(axis=0))
        np.testing.assert_allclose(state.running_var_src, self.x.data.var(axis=0))
        out = batch_norm(Tensor(self.x.data), state, False, None)
        np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-10)

    def test_update_running_flag(self):
        state = NormState(self.channels, 'bn')
        batch_norm(Tensor(self.x.data), state, True, None, update_running=False)
        np.testing.assert_array_equal(state.running_mean_src, 0.0)

    def test_channel_mismatch(self):
        with self.assertRaises(ShiftLabDimensionError):
            batch_norm(Tensor(np.ones((4, 3))), self.state, True, None)


class GroupNormWS(NormTestBase):
    def setUp(self):
        super().setUp()
        self.state = NormState(self.channels, 'gn', groups=2)

    def test_cross_sample_independence(self):
        out = group_norm(Tensor(self.x.data), self.state, None)
        changed = self.x.data.copy()
        changed[1:] = self.rng.normal(size=changed[1:].shape)
        out_changed = group_norm(Tensor(changed), self.state, None)
        np.testing.assert_array_equal(out.data[0], out_changed.data[0],
                                      'A row must not depend on the other rows of the batch')

    def test_training_equals_inference(self):
        layer = make_norm(NormKind.GroupNormWS, self.channels, 'gn', groups=2)
        training = layer.forward(Tensor(self.x.data), self.mask, True, None)
        inference = layer.forward(Tensor(self.x.data), self.mask, False, None)
        np.testing.assert_array_equal(training.data, inference.data)

    def test_gradient(self):
        self.check_gradient(lambda tape: group_norm(self.x, self.state, tape),
                            [self.x, self.state.gamma, self.state.beta])

    def test_groups_must_divide(self):
        with self.assertRaises(ShiftLabConfigError) as context:
            NormState(6, 'gn', groups=4)
        self.assertEqual(context.exception.key, 'train.groups')

    def test_weight_standardization(self):
        w = Param(self.rng.normal(0.0, 10.0, size=(16, 5)), 'w')
        standardized = weight_standardize(w, None)
        self.assertLess(np.abs(standardized.data.mean(axis=0)).max(), 1e-10)
        self.assertLess(np.abs(standardized.data.var(axis=0) - 1).max(), 1e-6)

    def test_weight_standardization_gradient(self):
        w = Param(self.rng.normal(size=(6, self.channels)), 'w')
        x = Tensor(self.rng.normal(size=(5, 6)))

        def forward(tape):
            return linear_forward(x, weight_standardize(w, tape), Tensor(np.zeros(self.channels)), tape)

        self.check_gradient(forward, [w])

    def test_weight_standardization_single_input(self):
        with self.assertRaises(ShiftLabConfigError):
            weight_standardize(Param(np.ones((1, 3)), 'w'), None)


class DomainAgnostic(NormTestBase):
    def test_target_rows_do_not_change_constants(self):
        """
        Perturbing target rows leaves the source outputs and the running statistics bit-identical
        """
        state_a = NormState(self.channels, 'dan')
        state_b = NormState(self.channels, 'dan')
        perturbed = self.x.data.copy()
        perturbed[~self.mask] += self.rng.normal(0.0, 10.0, size=perturbed[~self.mask].shape)

        out_a = dan_norm(Tensor(self.x.data), self.mask, state_a, True, None)
        out_b = dan_norm(Tensor(perturbed), self.mask, state_b, True, None)
        np.testing.assert_array_equal(out_a.data[self.mask], out_b.data[self.mask])
        np.testing.assert_array_equal(state_a.running_mean_src, state_b.running_mean_src)
        np.testing.assert_array_equal(state_a.running_var_src, state_b.running_var_src)

    def test_gradient(self):
        self.check_gradient(lambda tape: dan_norm(self.x, self.mask, self.state, True, tape, update_running=False),
                            [self.x, self.state.gamma, self.state.beta])

    def test_needs_source_rows(self):
        mask = np.array([True] + [False] * 7)
        with self.assertRaises(ShiftLabBatchError):
            dan_norm(Tensor(self.x.data), mask, self.state, True, None)


class TransNorm(NormTestBase):
    def test_alpha_sums_to_channels(self):
        for trial in range(10):
            with self.subTest(trial=trial):
                stats_src = (self.rng.normal(size=6), self.rng.uniform(0.1, 3.0, size=6))
                stats_tgt = (self.rng.normal(size=6), self.rng.uniform(0.1, 3.0, size=6))
                alpha = transferability_alpha(stats_src, stats_tgt, 1e-5)
                self.assertAlmostEqual(alpha.sum(), 6.0, delta=1e-9)
                self.assertTrue((alpha > 0).all())

    def test_equal_statistics(self):
        stats = (self.rng.normal(size=5), self.rng.uniform(0.1, 3.0, size=5))
        np.testing.assert_allclose(transferability_alpha(stats, stats, 1e-5), np.ones(5), atol=1e-12)

    def test_alpha_symmetric(self):
        for trial in range(10):
            with self.subTest(trial=trial):
                stats_src = (self.rng.normal(size=6), self.rng.uniform(0.1, 3.0, size=6))
                stats_tgt = (self.rng.normal(size=6), self.rng.uniform(0.1, 3.0, size=6))
                np.testing.assert_array_equal(transferability_alpha(stats_src, stats_tgt, 1e-5),
                                              transferability_alpha(stats_tgt, stats_src, 1e-5))

    def test_target_translation_only_rescales_channels(self):
        """
        Translating the target rows leaves the standardized activations unchanged. Only the channel weights move
        """
        groups = [(np.arange(4), np.arange(4)), (np.arange(4, 8), np.arange(4, 8))]
        shifted = self.x.data.copy()
        shifted[~self.mask] += self.rng.normal(0.0, 20.0, size=self.channels)

        unscaled = []
        for x in (self.x.data, shifted):
            state = NormState(self.channels, 'tn')
            out = trans_norm(Tensor(x), self.mask, state, True, None)
            _, stats = _standardize(Tensor(x), groups, state.eps, None)
            unscaled.append(out.data / (1 + transferability_alpha(stats[0], stats[1], state.eps)))
        np.testing.assert_allclose(unscaled[0], unscaled[1], atol=1e-9)

    def test_domains_normalized_separately(self):
        state = NormState(self.channels, 'tn')
        out = trans_norm(Tensor(self.x.data), self.mask, state, True, None)
        _, stats = _standardize(Tensor(self.x.data), [(np.arange(4), np.arange(4)), (np.arange(4, 8), np.arange(4, 8))],
                                state.eps, None)
        alpha = transferability_alpha(stats[0], stats[1], state.eps)
        for rows in (self.mask, ~self.mask):
            np.testing.assert_allclose(out.data[rows].mean(axis=0), 0.0, atol=1e-10)
            np.testing.assert_allclose(out.data[rows].var(axis=0), (1 + alpha) ** 2, rtol=1e-4)

    def test_affine_gradient(self):
        """
        alpha does not depend on gamma and beta, so their gradient is exact
        """
        self.check_gradient(
            lambda tape: trans_norm(Tensor(self.x.data), self.mask, self.state, True, tape, update_running=False),
            [self.state.gamma, self.state.beta]
        )

    def test_per_domain_standardization_gradient(self):
        groups = [(np.arange(4), np.arange(4)), (np.arange(4, 8), np.arange(4, 8))]
        self.check_gradient(lambda tape: _standardize(self.x, groups, 1e-5, tape)[0], [self.x])

    def test_needs_both_domains(self):
        mask = np.array([True] * 7 + [False])
        with self.assertRaises(ShiftLabBatchError):
            trans_norm(Tensor(self.x.data), mask, self.state, True, None)

    def test_inference_uses_domain_statistics(self):
        layer = make_norm(NormKind.TransNorm, self.channels, 'tn', momentum=1.0)
        layer.forward(Tensor(self.x.data), self.mask, True, None)
        np.testing.assert_allclose(layer.state.running_mean_src, self.x.data[self.mask].mean(axis=0))
        np.testing.assert_allclose(layer.state.running_mean_tgt, self.x.data[~self.mask].mean(axis=0))
        target = layer.forward(Tensor(self.x.data[~self.mask]), np.zeros(4, dtype=bool), False, None)
        np.testing.assert_allclose(target.data.mean(axis=0), 0.0, atol=1e-10)


class Factory(unittest.TestCase):
    def test_kinds(self):
        for kind in NormKind:
            with self.subTest(kind=kind):
                layer = make_norm(kind, 8, 'layer', groups=4)
                self.assertIs(layer.kind, kind)
                self.assertEqual(len(layer.params()), 2)
