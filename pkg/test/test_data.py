import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from shiftlab.data import (ALIGNABLE_SHIFT, Sample, ShiftSpec, SOURCE, TARGET, batch_composition, class_means,
                           export_csv, gen_shifted_gaussians, mixed_batches, single_domain_batches, split_72_8_20)
from shiftlab.errors import ShiftLabConfigError, ShiftLabDataError


def one_class(n: int, label: int = 0, start: int = 0):
    return [Sample(start + i, np.array([float(i), 0.0]), label, SOURCE) for i in range(n)]


class Split(unittest.TestCase):
    def test_hundred(self):
        split = split_72_8_20(one_class(100), seed=0)
        self.assertEqual((len(split.train), len(split.val), len(split.test)), (72, 8, 20))

    def test_thirty_seven(self):
        """
        The leftover samples go to train first, then validation
        """
        split = split_72_8_20(one_class(37), seed=0)
        self.assertEqual((len(split.train), len(split.val), len(split.test)), (27, 3, 7))

    def test_partition(self):
        samples = one_class(40, 0) + one_class(23, 1, start=40)
        split = split_72_8_20(samples, seed=3)
        ids = [[s.id for s in part] for part in (split.train, split.val, split.test)]
        union = set().union(*ids)
        self.assertEqual(union, {s.id for s in samples}, 'The splits must cover the input')
        self.assertEqual(sum(len(part) for part in ids), len(samples), 'The splits must be disjoint')

    def test_stratified(self):
        samples = one_class(50, 0) + one_class(50, 1, start=50)
        split = split_72_8_20(samples, seed=1)
        for label in (0, 1):
            self.assertEqual(sum(s.y == label for s in split.train), 36)

    def test_small_class(self):
        with self.assertRaises(ShiftLabDataError) as context:
            split_72_8_20(one_class(10, 0) + one_class(4, 7, start=10), seed=0)
        self.assertIn('7', str(context.exception), 'The error should name the class')

    def test_seeded(self):
        first = split_72_8_20(one_class(30), seed=5)
        second = split_72_8_20(one_class(30), seed=5)
        self.assertEqual([s.id for s in first.test], [s.id for s in second.test])


class ShiftedGaussians(unittest.TestCase):
    spec = ShiftSpec(num_classes=5, dim=2, per_class=40, theta=math.pi / 4, noise=0.3, seed=0)

    def test_deterministic(self):
        first = gen_shifted_gaussians(self.spec)
        second = gen_shifted_gaussians(self.spec)
        for a, b in zip(first.target.all(), second.target.all()):
            np.testing.assert_array_equal(a.x, b.x)
            self.assertEqual(a.y, b.y)

    def test_unique_ids(self):
        split = gen_shifted_gaussians(self.spec)
        ids = [s.id for s in split.source.all() + split.target.all()]
        self.assertEqual(len(ids), len(set(ids)))
        self.assertEqual(len(ids), 2 * 5 * 40)

    def test_nearest_mean_oracle(self):
        """
        A nearest class mean classifier separates each domain almost perfectly
        """
        split = gen_shifted_gaussians(self.spec)
        means = class_means(5, 2)
        rotation = np.array([[math.cos(math.pi / 4), -math.sin(math.pi / 4)],
                             [math.sin(math.pi / 4), math.cos(math.pi / 4)]])
        for domain, samples, centers in ((SOURCE, split.source.all(), means),
                                         (TARGET, split.target.all(), means @ rotation.T)):
            with self.subTest(domain=domain):
                x = np.stack([s.x for s in samples])
                predicted = np.linalg.norm(x[:, None, :] - centers[None], axis=2).argmin(axis=1)
                accuracy = np.mean(predicted == np.array([s.y for s in samples]))
                self.assertGreaterEqual(accuracy, 0.95)

    def test_label_marginals(self):
        split = gen_shifted_gaussians(self.spec)
        source = np.bincount([s.y for s in split.source.all()])
        target = np.bincount([s.y for s in split.target.all()])
        np.testing.assert_array_equal(source, target)

    def test_translation(self):
        spec = ShiftSpec(num_classes=3, dim=3, per_class=20, theta=0.0, translation=(10.0,), seed=2)
        split = gen_shifted_gaussians(spec)
        source = np.stack([s.x for s in split.source.all()])
        target = np.stack([s.x for s in split.target.all()])
        self.assertAlmostEqual(target[:, 0].mean() - source[:, 0].mean(), 10.0, delta=0.3)

    def test_invalid(self):
        for spec in (ShiftSpec(num_classes=1), ShiftSpec(dim=1), ShiftSpec(noise=0.0),
                     ShiftSpec(translation=(1.0, 2.0, 3.0))):
            with self.subTest(spec=spec):
                with self.assertRaises(ShiftLabConfigError):
                    gen_shifted_gaussians(spec)

    def test_non_finite(self):
        for field, spec in (('dataset.theta', ShiftSpec(theta=math.nan)),
                            ('dataset.translation', ShiftSpec(translation=(math.inf, 0.0))),
                            ('dataset.noise', ShiftSpec(noise=math.inf))):
            with self.subTest(field=field):
                with self.assertRaises(ShiftLabConfigError) as context:
                    gen_shifted_gaussians(spec)
                self.assertEqual(context.exception.key, field)

    def nearest_source_mean(self, spec):
        means = class_means(spec.num_classes, spec.dim)
        rotation = np.array([[math.cos(spec.theta), -math.sin(spec.theta)],
                             [math.sin(spec.theta), math.cos(spec.theta)]])
        rotated = means @ rotation.T
        return np.linalg.norm(rotated[:, None, :] - means[None], axis=2).argmin(axis=1)

    def test_default_rotation_relabels(self):
        """
        A 45 degree rotation lands every class mean nearer to the next class than to its own
        """
        np.testing.assert_array_equal(self.nearest_source_mean(ShiftSpec()), [1, 2, 3, 4, 0])

    def test_alignable_shift(self):
        np.testing.assert_array_equal(self.nearest_source_mean(ALIGNABLE_SHIFT), np.arange(5))
        split = gen_shifted_gaussians(ALIGNABLE_SHIFT)
        source = np.stack([s.x for s in split.source.all()])
        target = np.stack([s.x for s in split.target.all()])
        self.assertGreater(target[:, 0].min(), source[:, 0].max())

    def test_export(self):
        split = gen_shifted_gaussians(ShiftSpec(per_class=10))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'samples.csv'
            export_csv(split, path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['id', 'domain', 'label', 'x0', 'x1'])
        self.assertEqual(len(frame), 2 * 5 * 10)


class Batches(unittest.TestCase):
    def setUp(self):
        self.src = [Sample(i, np.array([float(i)]), i % 2, SOURCE) for i in range(40)]
        self.tgt = [Sample(100 + i, np.array([float(i)]), -1, TARGET) for i in range(25)]

    def test_composition(self):
        self.assertEqual(batch_composition(32, 0.5), (16, 16))

    def test_composition_guard(self):
        for batch_size, fraction in ((32, 1.0), (3, 0.5), (32, 0.0)):
            with self.subTest(batch_size=batch_size, fraction=fraction):
                with self.assertRaises(ShiftLabConfigError):
                    batch_composition(batch_size, fraction)

    def test_mixed(self):
        batches = list(mixed_batches(self.src, self.tgt, 8, 0.5, seed=0))
        self.assertEqual(len(batches), 10)
        for batch in batches:
            np.testing.assert_array_equal(batch.mask, [True] * 4 + [False] * 4)
        seen = {int(i) for batch in batches for i in batch.ids[batch.mask]}
        self.assertEqual(seen, set(range(40)), 'The epoch should cover every source sample')

    def test_mixed_seeded(self):
        first = [b.ids.tolist() for b in mixed_batches(self.src, self.tgt, 8, 0.5, seed=4)]
        second = [b.ids.tolist() for b in mixed_batches(self.src, self.tgt, 8, 0.5, seed=4)]
        self.assertEqual(first, second)

    def test_single_domain(self):
        batches = list(single_domain_batches(self.src, 16, seed=0))
        self.assertEqual([len(b) for b in batches], [16, 16])
        small = list(single_domain_batches(self.src[:5], 16, seed=0))
        self.assertEqual([len(b) for b in small], [5])

    def test_empty_pool(self):
        with self.assertRaises(ShiftLabDataError):
            list(mixed_batches(self.src, [], 8, 0.5, seed=0))
