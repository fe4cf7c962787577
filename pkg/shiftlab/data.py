"""
Two-domain datasets: samples, the stratified 72/8/20 split, the synthetic shifted-Gaussians benchmark and the
assembly of mixed source/target training batches.
"""
import dataclasses
import logging
import math
import typing

import numpy as np
import pandas as pd

from .errors import ShiftLabConfigError, ShiftLabDataError
from .results import atomic_write_frame

logger = logging.getLogger(__name__)

SOURCE = 'source'
TARGET = 'target'
DOMAINS = (SOURCE, TARGET)
UNLABELED = -1
"""The label carried by a sample whose ground truth is hidden"""

MIN_PER_CLASS = 5


def derive_seed(base: int, *keys: int) -> int:
    """
    Derives an independent, reproducible seed from a base seed and any number of integer keys (an epoch, a round...)
    """
    return int(np.random.SeedSequence([base, *keys]).generate_state(1)[0])


@dataclasses.dataclass(frozen=True, eq=False)
class Sample:
    id: int
    x: np.ndarray
    y: int
    domain: str


@dataclasses.dataclass
class DomainSplit:
    train: typing.List[Sample]
    val: typing.List[Sample]
    test: typing.List[Sample]

    def all(self) -> typing.List[Sample]:
        return sorted(self.train + self.val + self.test, key=lambda s: s.id)


@dataclasses.dataclass
class DatasetSplit:
    source: DomainSplit
    target: DomainSplit
    num_classes: int
    class_names: typing.Tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.source.train[0].x) if self.source.train else len(self.target.train[0].x)


@dataclasses.dataclass(frozen=True)
class ShiftSpec:
    """
    Describes a synthetic covariate shift: Gaussian class clusters placed on a circle, with the target domain rotated
    and translated in the first two coordinates
    """
    num_classes: int = 5
    dim: int = 2
    per_class: int = 55
    theta: float = math.pi / 4
    translation: typing.Tuple[float, ...] = (0.0, 0.0)
    noise: float = 0.3
    seed: int = 0

    def validate(self):
        if self.num_classes < 2:
            raise ShiftLabConfigError('A shift needs at least 2 classes, got {}'.format(self.num_classes),
                                      key='dataset.num_classes')
        if self.dim < 2:
            raise ShiftLabConfigError('A shift needs at least 2 dimensions, got {}'.format(self.dim),
                                      key='dataset.dim')
        if self.per_class < MIN_PER_CLASS:
            raise ShiftLabConfigError(
                'A shift needs at least {} samples per class, got {}'.format(MIN_PER_CLASS, self.per_class),
                key='dataset.per_class'
            )
        if not math.isfinite(self.theta):
            raise ShiftLabConfigError('The rotation angle must be finite, got {}'.format(self.theta),
                                      key='dataset.theta')
        if not all(math.isfinite(t) for t in self.translation):
            raise ShiftLabConfigError('The translation must be finite, got {}'.format(self.translation),
                                      key='dataset.translation')
        if not (self.noise > 0 and math.isfinite(self.noise)):
            raise ShiftLabConfigError('The noise must be a finite positive number, got {}'.format(self.noise),
                                      key='dataset.noise')
        if len(self.translation) > self.dim:
            raise ShiftLabConfigError(
                'The translation has {} components but the data only has {} dimensions'.format(
                    len(self.translation), self.dim
                ),
                key='dataset.translation'
            )


ALIGNABLE_SHIFT = ShiftSpec(theta=math.pi / 12, translation=(8.0, 0.0))
"""
A shift that unsupervised alignment can undo. The rotation stays below half the angle between neighbouring class
means, so matching the two marginals also matches the classes, and the translation carries the whole target cloud out
of the region the source classifier was fitted on. The default ShiftSpec rotates by a whole 45 degrees, which maps the
evenly spaced class layout closer onto a relabelled copy of itself than onto the original labels
"""


def class_means(num_classes: int, dim: int, radius: float = 3.0) -> np.ndarray:
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def gen_shifted_gaussians(spec: ShiftSpec) -> DatasetSplit:
    """
    Draws the same Gaussian class clusters for both domains, then rotates the target draws by spec.theta and
    translates them. Labels are preserved by the shift
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec.num_classes, spec.dim)

    rotation = np.array([[math.cos(spec.theta), -math.sin(spec.theta)],
                         [math.sin(spec.theta), math.cos(spec.theta)]])
    translation = np.zeros(spec.dim)
    translation[:len(spec.translation)] = spec.translation

    samples = {}
    next_id = 0
    for domain in DOMAINS:
        samples[domain] = []
        for label, mean in enumerate(means):
            points = rng.normal(mean, spec.noise, size=(spec.per_class, spec.dim))
            if domain == TARGET:
                points[:, :2] = points[:, :2] @ rotation.T
                points = points + translation
            for point in points:
                samples[domain].append(Sample(next_id, point, label, domain))
                next_id += 1

    return DatasetSplit(
        source=split_72_8_20(samples[SOURCE], derive_seed(spec.seed, 0)),
        target=split_72_8_20(samples[TARGET], derive_seed(spec.seed, 1)),
        num_classes=spec.num_classes,
        class_names=tuple(str(c) for c in range(spec.num_classes))
    )


def split_72_8_20(samples: typing.Sequence[Sample], seed: int) -> DomainSplit:
    """
    Splits every class on its own into 72 % training, 8 % validation and 20 % test samples. The samples left over by
    rounding down go to train, then validation, then test

    :param samples: The samples of one domain
    :param seed: Seeds the shuffle within each class
    """
    rng = np.random.default_rng(seed)
    by_class = {}
    for sample in samples:
        by_class.setdefault(sample.y, []).append(sample)

    train, val, test = [], [], []
    for label in sorted(by_class):
        members = sorted(by_class[label], key=lambda s: s.id)
        n = len(members)
        if n < MIN_PER_CLASS:
            raise ShiftLabDataError(
                'The class {} has only {} samples, at least {} are needed to split it'.format(label, n, MIN_PER_CLASS)
            )
        sizes = [n * 72 // 100, n * 8 // 100, n * 20 // 100]
        for i in range(n - sum(sizes)):
            sizes[i % 3] += 1

        order = rng.permutation(n)
        shuffled = [members[i] for i in order]
        train += shuffled[:sizes[0]]
        val += shuffled[sizes[0]:sizes[0] + sizes[1]]
        test += shuffled[sizes[0] + sizes[1]:]

    def by_id(part):
        return sorted(part, key=lambda s: s.id)

    return DomainSplit(by_id(train), by_id(val), by_id(test))


@dataclasses.dataclass(eq=False)
class Batch:
    """
    A training batch. Rows whose label is hidden carry UNLABELED
    """
    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    """The domain mask: True for source rows, False for target rows"""

    @classmethod
    def from_samples(cls, samples: typing.Sequence[Sample]) -> 'Batch':
        return cls(
            ids=np.array([s.id for s in samples], dtype=np.int64),
            x=np.stack([s.x for s in samples]),
            y=np.array([s.y for s in samples], dtype=np.intp),
            mask=np.array([s.domain == SOURCE for s in samples], dtype=bool)
        )

    def __len__(self):
        return len(self.ids)


def batch_composition(batch_size: int, source_fraction: float) -> typing.Tuple[int, int]:
    """
    :return: The number of source and target rows in a mixed batch
    """
    n_source = int(math.floor(batch_size * source_fraction))
    n_target = batch_size - n_source
    if n_source < 2 or n_target < 2:
        raise ShiftLabConfigError(
            'A mixed batch of {} with a source fraction of {} has {} source and {} target rows; at least 2 of each '
            'are needed'.format(batch_size, source_fraction, n_source, n_target),
            key='train.source_fraction'
        )
    return n_source, n_target


def _cycle(n: int, rng: np.random.Generator) -> typing.Iterator[int]:
    while True:
        yield from rng.permutation(n)


def mixed_batches(src: typing.Sequence[Sample], tgt: typing.Sequence[Sample], batch_size: int,
                  source_fraction: float, seed: int) -> typing.Iterator[Batch]:
    """
    One epoch of mixed batches, each holding floor(batch_size·source_fraction) source rows followed by the remaining
    target rows. Both pools are shuffled independently; the shorter one is reshuffled whenever it runs out, so the
    epoch covers every sample of the longer pool at least once
    """
    n_source, n_target = batch_composition(batch_size, source_fraction)
    if not src or not tgt:
        raise ShiftLabDataError(
            'Mixed batches need both domains, got {} source and {} target samples'.format(len(src), len(tgt))
        )
    rng = np.random.default_rng(seed)
    steps = max(math.ceil(len(src) / n_source), math.ceil(len(tgt) / n_target))
    src_order = _cycle(len(src), rng)
    tgt_order = _cycle(len(tgt), rng)
    for _ in range(steps):
        rows = [src[next(src_order)] for _ in range(n_source)] + [tgt[next(tgt_order)] for _ in range(n_target)]
        yield Batch.from_samples(rows)


def single_domain_batches(samples: typing.Sequence[Sample], batch_size: int, seed: int) -> typing.Iterator[Batch]:
    """
    One epoch of shuffled full batches from a single pool. A pool smaller than one batch yields a single batch
    holding all of it
    """
    if not samples:
        raise ShiftLabDataError('Cannot draw batches from an empty pool')
    order = np.random.default_rng(seed).permutation(len(samples))
    steps = max(1, len(samples) // batch_size)
    for step in range(steps):
        yield Batch.from_samples([samples[i] for i in order[step * batch_size:(step + 1) * batch_size]])


def samples_frame(split: DatasetSplit) -> pd.DataFrame:
    """
    All samples of both domains as one data frame with the columns id, domain, label, x0..x{D-1}
    """
    samples = sorted(split.source.all() + split.target.all(), key=lambda s: s.id)
    frame = pd.DataFrame(
        np.stack([s.x for s in samples]),
        columns=['x{}'.format(i) for i in range(split.dim)]
    )
    frame.insert(0, 'label', [s.y for s in samples])
    frame.insert(0, 'domain', [s.domain for s in samples])
    frame.insert(0, 'id', [s.id for s in samples])
    return frame


def export_csv(split: DatasetSplit, path):
    """
    Writes every sample of both domains to a CSV file
    """
    atomic_write_frame(samples_frame(split), path, float_format='%.10g')
    logger.info('Wrote %d samples to %s', len(split.source.all()) + len(split.target.all()), path)
