"""
The unsupervised adversarial domain adaptation model: a feature extractor (G_F), a label predictor (G_L) and a domain
discriminator (G_D), together with the training step that alternates between them.

The discriminator outputs P(domain = target). Minimising the confusion loss -Σ log(1 - G_D(G_F(x))) over the target
rows pushes the target features towards looking like source features.
"""
import dataclasses
import enum
import hashlib
import logging
import typing

import numpy as np

from .data import Batch, Sample, SOURCE, TARGET, UNLABELED, derive_seed, mixed_batches, single_domain_batches
from .errors import ShiftLabBatchError, ShiftLabConfigError, ShiftLabDataError
from .normalization import NormKind, NormLayer, make_norm, weight_standardize
from .optim import sgd_step, zero_grad
from .pool import Pool
from .stats import RunSummary, mean_per_class_accuracy
from .tensor import (BCE_EPS, Param, Tape, Tensor, _record, backward, binary_cross_entropy, linear_forward,
                     relu_forward, reshape, scale, sigmoid_forward, softmax, softmax_cross_entropy, take_rows)

logger = logging.getLogger(__name__)


class Mode(enum.Enum):
    SourceOnly = 'SourceOnly'
    TargetOnly = 'TargetOnly'
    UADA = 'UADA'
    UADASemi = 'UADASemi'

    @property
    def adversarial(self) -> bool:
        return self in (Mode.UADA, Mode.UADASemi)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    l2: float = 0.001
    momentum: float = 0.0
    batch_size: int = 32
    epochs: int = 100
    runs: int = 3
    seed: int = 0
    mode: Mode = Mode.UADA
    norm: NormKind = NormKind.TransNorm
    conf_weight: float = 1.0
    hidden: typing.Tuple[int, ...] = (64, 64)
    disc_hidden: typing.Tuple[int, ...] = (64,)
    source_fraction: float = 0.5
    groups: int = 8
    """The number of channel groups of GroupNormWS layers"""
    norm_eps: float = 1e-5
    norm_momentum: float = 0.1
    zero_init_head: bool = False
    """Start the label predictor's output layer at zero, so an untrained model predicts uniform probabilities"""

    def fingerprint(self) -> str:
        """
        A short digest identifying every setting but the seed
        """
        settings = dataclasses.replace(self, seed=0)
        return hashlib.sha1(repr(settings).encode('utf-8')).hexdigest()[:12]

    def effective_norm(self) -> NormKind:
        """
        The baselines are plain classifiers, so they always use batch normalization
        """
        return self.norm if self.mode.adversarial else NormKind.BatchNorm


@dataclasses.dataclass(frozen=True)
class LossReport:
    cls_loss: float
    dom_loss: float = 0.0
    conf_loss: float = 0.0


class Prediction(typing.NamedTuple):
    probs: np.ndarray
    """B×C class probabilities"""
    feats: np.ndarray
    """B×F features from G_F"""
    gd: np.ndarray
    """B discriminator outputs, P(domain = target)"""


class Linear:
    """
    A fully connected layer with weights drawn uniformly from ±1/sqrt(fan-in) and zero biases
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str, standardize: bool = False,
                 zero: bool = False):
        """
        :param standardize: True to standardize the weights before every use (weight standardization)
        :param zero: True to start with all-zero weights
        """
        bound = 1.0 / np.sqrt(in_dim)
        weights = np.zeros((in_dim, out_dim)) if zero else rng.uniform(-bound, bound, size=(in_dim, out_dim))
        self.w = Param(weights, name + '.w', decay=True)
        self.b = Param(np.zeros(out_dim), name + '.b', decay=False)
        self.standardize = standardize

    def forward(self, x: Tensor, tape: typing.Optional[Tape]) -> Tensor:
        w = weight_standardize(self.w, tape) if self.standardize else self.w
        return linear_forward(x, w, self.b, tape)

    def params(self) -> typing.List[Param]:
        return [self.w, self.b]


class FeatureExtractor:
    """
    G_F: blocks of linear layer, normalization and ReLU
    """

    def __init__(self, in_dim: int, hidden: typing.Sequence[int], kind: NormKind, rng: np.random.Generator,
                 cfg: TrainConfig):
        self.linears = []
        self.norms = []
        width = in_dim
        for i, out_dim in enumerate(hidden):
            self.linears.append(
                Linear(width, out_dim, rng, 'gf.{}'.format(i), standardize=kind is NormKind.GroupNormWS)
            )
            self.norms.append(make_norm(kind, out_dim, 'gf.{}.norm'.format(i), groups=cfg.groups, eps=cfg.norm_eps,
                                        momentum=cfg.norm_momentum))
            width = out_dim
        self.out_dim = width

    def forward(self, x: Tensor, mask: np.ndarray, training: bool, tape: typing.Optional[Tape],
                update_running: bool = True) -> Tensor:
        for linear, norm in zip(self.linears, self.norms):
            x = relu_forward(norm.forward(linear.forward(x, tape), mask, training, tape, update_running), tape)
        return x

    def params(self) -> typing.List[Param]:
        params = []
        for linear, norm in zip(self.linears, self.norms):
            params += linear.params() + norm.params()
        return params


class LabelPredictor:
    """
    G_L: a linear layer from features to class logits
    """

    def __init__(self, in_dim: int, num_classes: int, rng: np.random.Generator, zero: bool = False):
        self.linear = Linear(in_dim, num_classes, rng, 'gl', zero=zero)

    def forward(self, feats: Tensor, tape: typing.Optional[Tape]) -> Tensor:
        return self.linear.forward(feats, tape)

    def params(self) -> typing.List[Param]:
        return self.linear.params()


class DomainDiscriminator:
    """
    G_D: a ReLU network from features to one sigmoid output, the probability that a row comes from the target domain
    """

    def __init__(self, in_dim: int, hidden: typing.Sequence[int], rng: np.random.Generator):
        self.linears = []
        width = in_dim
        for i, out_dim in enumerate(list(hidden) + [1]):
            self.linears.append(Linear(width, out_dim, rng, 'gd.{}'.format(i)))
            width = out_dim

    def forward(self, feats: Tensor, tape: typing.Optional[Tape]) -> Tensor:
        x = feats
        for linear in self.linears[:-1]:
            x = relu_forward(linear.forward(x, tape), tape)
        logits = self.linears[-1].forward(x, tape)
        return reshape(sigmoid_forward(logits, tape), (logits.shape[0],), tape)

    def params(self) -> typing.List[Param]:
        return [param for linear in self.linears for param in linear.params()]


class UadaModel:
    def __init__(self, gf: FeatureExtractor, gl: LabelPredictor, gd: DomainDiscriminator, norm_kind: NormKind,
                 input_dim: int, num_classes: int):
        self.gf = gf
        self.gl = gl
        self.gd = gd
        self.norm_kind = norm_kind
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.velocity = {'cls': {}, 'disc': {}, 'conf': {}}
        """Momentum buffers of the three sub-updates"""

    @property
    def norms(self) -> typing.List[NormLayer]:
        return self.gf.norms

    def params(self) -> typing.List[Param]:
        return self.gf.params() + self.gl.params() + self.gd.params()

    def snapshot(self) -> typing.Dict[str, np.ndarray]:
        """
        Copies of every parameter value, keyed by parameter name
        """
        return {param.name: param.data.copy() for param in self.params()}

    def restore(self, snapshot: typing.Dict[str, np.ndarray]):
        for param in self.params():
            np.copyto(param.data, snapshot[param.name])
            param.grad[...] = 0.0


def build_model(cfg: TrainConfig, input_dim: int, num_classes: int, seed: int) -> UadaModel:
    """
    Initialises a model deterministically from the seed
    """
    if input_dim < 1 or num_classes < 2:
        raise ShiftLabConfigError(
            'A model needs a positive input dimension and at least 2 classes, got {} and {}'.format(input_dim,
                                                                                                   num_classes)
        )
    if not cfg.hidden or min(cfg.hidden) < 1 or (cfg.disc_hidden and min(cfg.disc_hidden) < 1):
        raise ShiftLabConfigError('Every hidden layer needs a positive width', key='train.hidden')
    kind = cfg.effective_norm()
    if kind is NormKind.GroupNormWS and input_dim < 2:
        raise ShiftLabConfigError('Weight standardization needs an input dimension of at least 2',
                                  key='train.norm')
    if kind is not cfg.norm:
        logger.info('The %s baseline uses batch normalization instead of %s', cfg.mode.value, cfg.norm.value)

    rng = np.random.default_rng(seed)
    gf = FeatureExtractor(input_dim, cfg.hidden, kind, rng, cfg)
    gl = LabelPredictor(gf.out_dim, num_classes, rng, zero=cfg.zero_init_head)
    gd = DomainDiscriminator(gf.out_dim, cfg.disc_hidden, rng)
    return UadaModel(gf, gl, gd, kind, input_dim, num_classes)


def confusion_loss(gd_out_target: Tensor, tape: typing.Optional[Tape]) -> Tensor:
    """
    -Σ log(1 - p) over the discriminator outputs of the target rows (a sum, not a mean). Outputs are clamped like in
    the binary cross-entropy. An empty set of rows has a loss of 0
    """
    p = gd_out_target.data
    if p.size == 0:
        return Tensor(0.0)
    clamped = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    inside = (p >= BCE_EPS) & (p <= 1.0 - BCE_EPS)
    out = Tensor(-np.log(1.0 - clamped).sum())
    return _record(tape, (gd_out_target,), out, lambda g: (g * inside / (1.0 - clamped),))


def classification_update(model: UadaModel, batch: Batch, cfg: TrainConfig) -> float:
    """
    One SGD step of G_F and G_L on the cross-entropy of the labeled rows. This is the only sub-update that moves the
    running statistics of the normalization layers

    :return: The classification loss before the step
    """
    labeled = np.flatnonzero(batch.y != UNLABELED)
    if labeled.size == 0:
        raise ShiftLabBatchError('The batch has no labeled rows to classify')
    tape = Tape()
    feats = model.gf.forward(Tensor(batch.x), batch.mask, True, tape, update_running=True)
    logits = model.gl.forward(take_rows(feats, labeled, tape), tape)
    loss = softmax_cross_entropy(logits, batch.y[labeled], tape)
    backward(loss, tape)
    sgd_step(model.gf.params() + model.gl.params(), cfg.lr, cfg.l2, cfg.momentum, model.velocity['cls'])
    return loss.item()


def discriminator_update(model: UadaModel, batch: Batch, cfg: TrainConfig) -> float:
    """
    One SGD step of G_D on the binary cross-entropy of the domain labels (target = 1, source = 0). The features are
    recomputed without a tape, so no gradient reaches G_F
    """
    feats = model.gf.forward(Tensor(batch.x), batch.mask, True, None, update_running=False)
    tape = Tape()
    p = model.gd.forward(feats, tape)
    loss = binary_cross_entropy(p, (~batch.mask).astype(np.float64), tape)
    backward(loss, tape)
    sgd_step(model.gd.params(), cfg.lr, cfg.l2, cfg.momentum, model.velocity['disc'])
    return loss.item()


def confusion_update(model: UadaModel, batch: Batch, cfg: TrainConfig) -> float:
    """
    One SGD step of G_F alone on conf_weight times the confusion loss of the target rows. G_D and G_L keep their
    values

    :return: The (unweighted) confusion loss before the step
    """
    target = np.flatnonzero(~batch.mask)
    if target.size == 0:
        return 0.0
    tape = Tape()
    feats = model.gf.forward(Tensor(batch.x), batch.mask, True, tape, update_running=False)
    loss = confusion_loss(model.gd.forward(take_rows(feats, target, tape), tape), tape)
    backward(scale(loss, cfg.conf_weight, tape), tape)
    sgd_step(model.gf.params(), cfg.lr, 0.0, cfg.momentum, model.velocity['conf'])
    zero_grad(model.gd.params())
    return loss.item()


def train_step(model: UadaModel, batch: Batch, cfg: TrainConfig) -> LossReport:
    """
    Classification, then (in the adversarial modes) discriminator, then confusion sub-update on one batch
    """
    if not cfg.mode.adversarial:
        return LossReport(classification_update(model, batch, cfg))
    if batch.mask.all() or not batch.mask.any():
        raise ShiftLabBatchError('A {} batch needs rows of both domains'.format(cfg.mode.value))
    cls_loss = classification_update(model, batch, cfg)
    dom_loss = discriminator_update(model, batch, cfg)
    conf_loss = confusion_update(model, batch, cfg)
    return LossReport(cls_loss, dom_loss, conf_loss)


def _hide_label(sample: Sample) -> Sample:
    return Sample(sample.id, sample.x, UNLABELED, sample.domain)


def epoch_batches(pool: Pool, cfg: TrainConfig, epoch: int) -> typing.Iterator[Batch]:
    """
    The batches of one epoch for the configured mode. UADA never sees a target label, not even of annotated samples;
    UADASemi trains on annotated target samples as labeled rows
    """
    seed = derive_seed(cfg.seed, epoch)
    if cfg.mode is Mode.SourceOnly:
        if not pool.labeled_src:
            raise ShiftLabDataError('SourceOnly training needs labeled source samples')
        return single_domain_batches(pool.labeled_src, cfg.batch_size, seed)
    if cfg.mode is Mode.TargetOnly:
        if not pool.labeled_tgt:
            raise ShiftLabDataError('TargetOnly training needs labeled target samples')
        return single_domain_batches(pool.labeled_tgt, cfg.batch_size, seed)

    if cfg.mode is Mode.UADA:
        target = [_hide_label(s) for s in pool.labeled_tgt] + pool.unlabeled_tgt
    else:
        target = pool.labeled_tgt + pool.unlabeled_tgt
    target.sort(key=lambda s: s.id)
    if not pool.labeled_src or not target:
        raise ShiftLabDataError('{} training needs labeled source samples and target samples'.format(cfg.mode.value))
    return mixed_batches(pool.labeled_src, target, cfg.batch_size, cfg.source_fraction, seed)


def train(model: UadaModel, pool: Pool, cfg: TrainConfig) -> typing.Tuple[UadaModel, typing.List[LossReport]]:
    """
    Runs cfg.epochs epochs of train_step

    :return: The model, trained in place, and the mean losses of every epoch
    """
    history = []
    for epoch in range(cfg.epochs):
        reports = [train_step(model, batch, cfg) for batch in epoch_batches(pool, cfg, epoch)]
        mean = LossReport(
            float(np.mean([r.cls_loss for r in reports])),
            float(np.mean([r.dom_loss for r in reports])),
            float(np.mean([r.conf_loss for r in reports]))
        )
        history.append(mean)
        logger.debug('Epoch %d: cls %.4f dom %.4f conf %.4f', epoch, mean.cls_loss, mean.dom_loss, mean.conf_loss)
    return model, history


def predict_proba(model: UadaModel, x: np.ndarray, domain: str) -> Prediction:
    """
    Inference with the running statistics of the normalization layers

    :param domain: SOURCE or TARGET, the domain every row of x comes from
    """
    if domain not in (SOURCE, TARGET):
        raise ShiftLabConfigError('Unknown domain {!r}'.format(domain))
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mask = np.full(x.shape[0], domain == SOURCE)
    feats = model.gf.forward(Tensor(x), mask, False, None)
    logits = model.gl.forward(feats, None)
    gd = model.gd.forward(feats, None)
    return Prediction(softmax(logits.data), feats.data, gd.data)


def evaluate(model: UadaModel, samples: typing.Sequence[Sample], domain: str, seed: typing.Optional[int] = None,
             fingerprint: typing.Optional[str] = None) -> RunSummary:
    """
    The mean per-class accuracy of the model on labeled samples of one domain
    """
    if not samples:
        raise ShiftLabDataError('Cannot evaluate on an empty set of {} samples'.format(domain))
    prediction = predict_proba(model, np.stack([s.x for s in samples]), domain)
    mpca, recalls = mean_per_class_accuracy(prediction.probs.argmax(axis=1), [s.y for s in samples],
                                            model.num_classes)
    return RunSummary(seed, tuple(recalls.tolist()), mpca, fingerprint)
