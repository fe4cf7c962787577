import logging
import typing

from .data import DatasetSplit, Sample, TARGET, UNLABELED
from .errors import ShiftLabDataError

logger = logging.getLogger(__name__)


class Pool:
    """
    The training samples of an active learning run: labeled source samples, annotated target samples, and target
    samples whose labels are hidden until the oracle reveals them. Ids are stable across rounds
    """

    def __init__(self, labeled_src: typing.Iterable[Sample], target: typing.Iterable[Sample],
                 reveal_target: bool = False):
        """
        :param labeled_src: The labeled source training samples
        :param target: The target training samples, with their ground truth labels
        :param reveal_target: True to start with every target sample labeled, as a target-only baseline trains. No
            oracle reads are counted for these
        """
        self.labeled_src = sorted(labeled_src, key=lambda s: s.id)
        self._labeled_tgt = {}
        self._unlabeled = {}
        self._oracle = {}
        self.oracle_reads = 0
        """The number of hidden labels the oracle has revealed"""
        self.oracle_log = []
        """The ids whose labels the oracle has revealed, in order"""

        for sample in sorted(target, key=lambda s: s.id):
            if sample.id in self._oracle or sample.id in self._labeled_tgt:
                raise ShiftLabDataError('The target sample id {} appears twice'.format(sample.id))
            if reveal_target:
                self._labeled_tgt[sample.id] = sample
            else:
                self._oracle[sample.id] = sample.y
                self._unlabeled[sample.id] = Sample(sample.id, sample.x, UNLABELED, TARGET)

    @classmethod
    def from_split(cls, split: DatasetSplit, reveal_target: bool = False) -> 'Pool':
        return cls(split.source.train, split.target.train, reveal_target=reveal_target)

    @property
    def labeled_tgt(self) -> typing.List[Sample]:
        return [self._labeled_tgt[i] for i in sorted(self._labeled_tgt)]

    @property
    def unlabeled_tgt(self) -> typing.List[Sample]:
        return [self._unlabeled[i] for i in sorted(self._unlabeled)]

    def unlabeled_ids(self) -> typing.List[int]:
        return sorted(self._unlabeled)

    def target_ids(self) -> typing.Set[int]:
        return set(self._unlabeled).union(self._labeled_tgt)

    def annotate(self, ids: typing.Iterable[int]) -> typing.List[int]:
        """
        Asks the oracle for the label of every id and moves the samples into the labeled target set

        :return: The revealed labels, in the order of ids
        """
        return [oracle_label(self, i) for i in ids]


def oracle_label(pool: Pool, sample_id: int) -> int:
    """
    Reveals the hidden label of an unlabeled target sample, simulating its annotation. The sample moves into the
    labeled target set, so the same id cannot be queried twice

    :return: The ground truth class index
    """
    if sample_id not in pool._unlabeled:
        raise ShiftLabDataError('The id {} is not in the unlabeled target pool'.format(sample_id))
    hidden = pool._unlabeled.pop(sample_id)
    label = pool._oracle.pop(sample_id)
    pool._labeled_tgt[sample_id] = Sample(sample_id, hidden.x, label, TARGET)
    pool.oracle_reads += 1
    pool.oracle_log.append(sample_id)
    return label
