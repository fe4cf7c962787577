"""
Pool-based, batch-wise active learning on the target domain: the selection strategies and the round loop that
trains a model from scratch, evaluates it, and has the oracle annotate the next batch.
"""
import abc
import dataclasses
import enum
import logging
import typing

import numpy as np
from scipy import special

from .data import DatasetSplit, TARGET, derive_seed
from .errors import ShiftLabConfigError, ShiftLabPoolExhaustedError
from .model import Mode, TrainConfig, UadaModel, build_model, evaluate, predict_proba, train
from .optim import sgd_step
from .pool import Pool
from .tensor import BCE_EPS, Tape, Tensor, backward, softmax_cross_entropy

logger = logging.getLogger(__name__)


class StrategyKind(enum.Enum):
    Random = 'Random'
    Certainty = 'Certainty'
    DivDis = 'DivDis'
    IWERM = 'IWERM'
    EMOC = 'EMOC'


@dataclasses.dataclass(frozen=True)
class ALConfig:
    k: int = 10
    """The number of samples annotated per round"""
    rounds: int = 30
    strategy: StrategyKind = StrategyKind.Random
    seed: int = 0
    lambda_divdis: float = 0.5
    """The weight of the boundary closeness against the diversity in DivDis"""
    emoc_lr: typing.Optional[float] = None
    """The learning rate of the EMOC lookahead step. None to use the training learning rate"""
    emoc_eval_size: int = 100
    """The size of the unlabeled subset on which EMOC measures the change of the outputs"""
    emoc_max_candidates: typing.Optional[int] = None
    """If set, EMOC only scores a seeded subset of this many candidates (at least k)"""
    certainty_most_certain: bool = True
    """True to select the samples of lowest entropy, False for the highest"""
    late_k: typing.Optional[int] = None
    late_k_after: typing.Optional[int] = None
    """From this round on, late_k samples are annotated per round instead of k"""

    def validate(self):
        if self.k < 1:
            raise ShiftLabConfigError('k must be positive, got {}'.format(self.k), key='al.k')
        if self.rounds < 0:
            raise ShiftLabConfigError('The number of rounds cannot be negative, got {}'.format(self.rounds),
                                      key='al.rounds')
        if not 0.0 <= self.lambda_divdis <= 1.0:
            raise ShiftLabConfigError('lambda_divdis must lie in [0, 1], got {}'.format(self.lambda_divdis),
                                      key='al.lambda_divdis')
        if self.emoc_lr is not None and self.emoc_lr < 0:
            raise ShiftLabConfigError('emoc_lr cannot be negative, got {}'.format(self.emoc_lr), key='al.emoc_lr')
        if self.emoc_eval_size < 1:
            raise ShiftLabConfigError('emoc_eval_size must be positive', key='al.emoc_eval_size')
        if (self.late_k is None) != (self.late_k_after is None):
            raise ShiftLabConfigError('late_k and late_k_after must be set together', key='al.late_k')
        if self.late_k is not None and (self.late_k < 1 or self.late_k_after < 0):
            raise ShiftLabConfigError('late_k must be positive and late_k_after non-negative', key='al.late_k')

    def k_for_round(self, r: int) -> int:
        """
        The number of samples annotated at the end of round r
        """
        if self.late_k is not None and r >= self.late_k_after:
            return self.late_k
        return self.k

    def annotations_before(self, r: int) -> int:
        """
        The number of annotated target samples the model of round r is trained with
        """
        return sum(self.k_for_round(i) for i in range(r))


@dataclasses.dataclass(frozen=True)
class RoundResult:
    round: int
    selected_ids: typing.Tuple[int, ...]
    """The ids annotated after this round was evaluated (empty for the last round)"""
    mpca: float
    annotated: int = 0
    """The number of annotated target samples this round's model was trained with"""


def entropy(probs: np.ndarray) -> np.ndarray:
    """
    The entropy -Σ p ln p of every row, with 0 ln 0 = 0
    """
    return special.entr(np.asarray(probs, dtype=np.float64)).sum(axis=1)


def score_certainty(probs: np.ndarray) -> np.ndarray:
    """
    The entropy of every posterior. The Certainty strategy selects the k smallest
    """
    return entropy(probs)


def score_iwerm(probs: np.ndarray, gd: np.ndarray) -> np.ndarray:
    """
    The entropy of every posterior weighted by the importance gd / (1 - gd) the discriminator assigns to the sample
    """
    gd = np.clip(np.asarray(gd, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    return gd / (1.0 - gd) * entropy(probs)


def top_k(ids: typing.Sequence[int], scores: np.ndarray, k: int, largest: bool = True) -> typing.List[int]:
    """
    The ids of the k best scores. Equal scores are ranked by ascending id
    """
    ids = np.asarray(ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((ids, -scores if largest else scores))
    return ids[order[:k]].tolist()


def boundary_closeness(probs: np.ndarray) -> np.ndarray:
    """
    One minus the margin between the two largest class probabilities
    """
    top2 = np.sort(np.asarray(probs, dtype=np.float64), axis=1)[:, -2:]
    return 1.0 - (top2[:, 1] - top2[:, 0])


def select_divdis(ids: typing.Sequence[int], probs: np.ndarray, feats: np.ndarray, k: int,
                  lam: float) -> typing.List[int]:
    """
    Greedy selection trading the closeness to the decision boundary off against the diversity of the selection. The
    first pick is the sample closest to the boundary; every further pick maximises
    lam·closeness + (1 - lam)·(1 - the largest cosine similarity to an already selected sample)

    :return: The selected ids in the order they were picked
    """
    ids = np.asarray(ids, dtype=np.int64)
    if k > len(ids):
        raise ShiftLabPoolExhaustedError('Cannot select {} of {} candidates'.format(k, len(ids)))
    closeness = boundary_closeness(probs)
    feats = np.asarray(feats, dtype=np.float64)
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    unit = np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)

    available = np.ones(len(ids), dtype=bool)
    max_similarity = None
    picked = []
    for _ in range(k):
        if max_similarity is None:
            scores = closeness
        else:
            scores = lam * closeness + (1.0 - lam) * (1.0 - max_similarity)
        candidates = np.flatnonzero(available)
        best = candidates[np.lexsort((ids[candidates], -scores[candidates]))[0]]
        picked.append(int(ids[best]))
        available[best] = False
        similarity = unit @ unit[best]
        max_similarity = similarity if max_similarity is None else np.maximum(max_similarity, similarity)
    return picked


def _target_x(samples) -> np.ndarray:
    return np.stack([s.x for s in samples])


def emoc_eval_set(pool: Pool, size: int, seed: int) -> np.ndarray:
    """
    The features of a seeded subset of the unlabeled pool, sorted by id
    """
    unlabeled = pool.unlabeled_tgt
    size = min(size, len(unlabeled))
    chosen = np.sort(np.random.default_rng(seed).choice(len(unlabeled), size=size, replace=False))
    return _target_x([unlabeled[i] for i in chosen])


def _lookahead_change(model: UadaModel, x: np.ndarray, label: int, lr: float, eval_x: np.ndarray,
                      base: np.ndarray) -> float:
    snapshot = model.snapshot()
    try:
        tape = Tape()
        feats = model.gf.forward(Tensor(x[None, :]), np.zeros(1, dtype=bool), False, tape)
        loss = softmax_cross_entropy(model.gl.forward(feats, tape), [label], tape)
        backward(loss, tape)
        sgd_step(model.gf.params() + model.gl.params(), lr)
        moved = predict_proba(model, eval_x, TARGET).probs
        return float(np.abs(moved - base).mean())
    finally:
        model.restore(snapshot)


def score_emoc(model: UadaModel, candidates: typing.Sequence[int], pool: Pool, lr: float, eval_size: int,
               seed: int) -> np.ndarray:
    """
    The expected change of the model outputs if a candidate were annotated. For every label y with p(y|x) > 0 the
    classification step on (x, y) is taken once from the current parameters; the mean absolute change of the class
    probabilities on a seeded evaluation subset of the unlabeled pool is weighted by p(y|x). The parameters are
    restored after every lookahead

    :param candidates: Ids of unlabeled target samples
    :param lr: The learning rate of the lookahead step
    """
    eval_x = emoc_eval_set(pool, eval_size, seed)
    base = predict_proba(model, eval_x, TARGET).probs
    unlabeled = {s.id: s for s in pool.unlabeled_tgt}
    xs = _target_x([unlabeled[i] for i in candidates])
    posteriors = predict_proba(model, xs, TARGET).probs

    scores = np.zeros(len(candidates))
    for i, (x, posterior) in enumerate(zip(xs, posteriors)):
        for label in np.flatnonzero(posterior > 0):
            scores[i] += posterior[label] * _lookahead_change(model, x, int(label), lr, eval_x, base)
    return scores


class SelectionStrategy(abc.ABC):
    """
    Chooses which unlabeled target samples to annotate next
    """
    kind: StrategyKind

    def __init__(self, al_cfg: ALConfig, train_cfg: TrainConfig):
        self.al_cfg = al_cfg
        self.train_cfg = train_cfg

    @abc.abstractmethod
    def choose(self, model: UadaModel, pool: Pool, k: int, seed: int) -> typing.List[int]:
        """
        :return: k distinct unlabeled target ids, in any order
        """

    def select(self, model: UadaModel, pool: Pool, k: int, seed: int) -> typing.List[int]:
        available = len(pool.unlabeled_ids())
        if k > available:
            raise ShiftLabPoolExhaustedError(
                'Cannot select {} samples from an unlabeled pool of {}'.format(k, available)
            )
        if k == 0:
            return []
        return sorted(self.choose(model, pool, k, seed))


class RandomStrategy(SelectionStrategy):
    kind = StrategyKind.Random

    def choose(self, model, pool, k, seed):
        ids = np.array(pool.unlabeled_ids(), dtype=np.int64)
        return np.random.default_rng(seed).choice(ids, size=k, replace=False).tolist()


class _PosteriorStrategy(SelectionStrategy):
    """
    A strategy that ranks the unlabeled pool by a score of the model outputs
    """
    largest = True

    @abc.abstractmethod
    def score(self, probs: np.ndarray, gd: np.ndarray) -> np.ndarray:
        pass

    def choose(self, model, pool, k, seed):
        unlabeled = pool.unlabeled_tgt
        prediction = predict_proba(model, _target_x(unlabeled), TARGET)
        scores = self.score(prediction.probs, prediction.gd)
        return top_k([s.id for s in unlabeled], scores, k, largest=self.largest)


class CertaintyStrategy(_PosteriorStrategy):
    kind = StrategyKind.Certainty

    @property
    def largest(self):
        return not self.al_cfg.certainty_most_certain

    def score(self, probs, gd):
        return score_certainty(probs)


class IwermStrategy(_PosteriorStrategy):
    kind = StrategyKind.IWERM

    def score(self, probs, gd):
        return score_iwerm(probs, gd)


class DivDisStrategy(SelectionStrategy):
    kind = StrategyKind.DivDis

    def choose(self, model, pool, k, seed):
        unlabeled = pool.unlabeled_tgt
        prediction = predict_proba(model, _target_x(unlabeled), TARGET)
        return select_divdis([s.id for s in unlabeled], prediction.probs, prediction.feats, k,
                             self.al_cfg.lambda_divdis)


class EmocStrategy(SelectionStrategy):
    kind = StrategyKind.EMOC

    def choose(self, model, pool, k, seed):
        candidates = pool.unlabeled_ids()
        limit = self.al_cfg.emoc_max_candidates
        if limit is not None and len(candidates) > max(limit, k):
            rng = np.random.default_rng(derive_seed(seed, 1))
            candidates = sorted(rng.choice(candidates, size=max(limit, k), replace=False).tolist())
        lr = self.train_cfg.lr if self.al_cfg.emoc_lr is None else self.al_cfg.emoc_lr
        scores = score_emoc(model, candidates, pool, lr, self.al_cfg.emoc_eval_size, seed)
        return top_k(candidates, scores, k)


_STRATEGIES = {
    StrategyKind.Random: RandomStrategy,
    StrategyKind.Certainty: CertaintyStrategy,
    StrategyKind.IWERM: IwermStrategy,
    StrategyKind.DivDis: DivDisStrategy,
    StrategyKind.EMOC: EmocStrategy,
}


def make_strategy(kind: StrategyKind, al_cfg: ALConfig = None, train_cfg: TrainConfig = None) -> SelectionStrategy:
    return _STRATEGIES[kind](al_cfg or ALConfig(strategy=kind), train_cfg or TrainConfig())


def select_batch(strategy: StrategyKind, model: UadaModel, pool: Pool, k: int, seed: int,
                 al_cfg: ALConfig = None, train_cfg: TrainConfig = None) -> typing.List[int]:
    """
    Selects k unlabeled target ids with the given strategy

    :return: The ids in ascending order
    """
    return make_strategy(strategy, al_cfg, train_cfg).select(model, pool, k, seed)


def run_active_learning(base_cfg: TrainConfig, al_cfg: ALConfig, data: DatasetSplit,
                        pool: Pool = None) -> typing.List[RoundResult]:
    """
    Runs rounds 0..al_cfg.rounds. Every round trains a UADASemi model from scratch on the current pool, evaluates it on
    the target test set and, except in the last round, has the oracle annotate the next batch the strategy selects.
    Round 0 is trained before any target label is known

    :param pool: The pool to annotate, by default a fresh one over the training sets of data. It is modified in place
    """
    al_cfg.validate()
    pool = pool if pool is not None else Pool.from_split(data)
    strategy = make_strategy(al_cfg.strategy, al_cfg, base_cfg)

    available = len(pool.unlabeled_ids())
    for r in range(al_cfg.rounds):
        if al_cfg.annotations_before(r + 1) > available:
            raise ShiftLabPoolExhaustedError(
                'The unlabeled pool of {} samples is exhausted in round {}'.format(available, r)
            )

    results = []
    for r in range(al_cfg.rounds + 1):
        seed = derive_seed(al_cfg.seed, r)
        cfg = dataclasses.replace(base_cfg, mode=Mode.UADASemi, seed=seed)
        model = build_model(cfg, data.dim, data.num_classes, seed)
        train(model, pool, cfg)
        annotated = len(pool.labeled_tgt)
        mpca = evaluate(model, data.target.test, TARGET, seed=al_cfg.seed).mpca

        selected = []
        if r < al_cfg.rounds:
            selected = strategy.select(model, pool, al_cfg.k_for_round(r), derive_seed(al_cfg.seed, r, 1))
            pool.annotate(selected)
        logger.info('%s round %d (%d annotated): mpca %.4f', al_cfg.strategy.value, r, annotated, mpca)
        results.append(RoundResult(r, tuple(selected), mpca, annotated))
    return results
