"""
The normalization layers compared by shiftlab. Every layer normalizes a B×C batch of features, applies a per-channel
scale (gamma) and shift (beta), and keeps running statistics for inference.

A domain mask accompanies every batch: one boolean per row, True for source rows and False for target rows.
"""
import abc
import enum
import typing

import numpy as np

from .errors import ShiftLabBatchError, ShiftLabConfigError, ShiftLabDimensionError
from .tensor import Param, Tape, Tensor, _record


class NormKind(enum.Enum):
    BatchNorm = 'BatchNorm'
    GroupNormWS = 'GroupNormWS'
    DomainAgnostic = 'DomainAgnostic'
    TransNorm = 'TransNorm'


WS_EPS = 1e-5


class NormState:
    """
    The parameters and running statistics of one normalization layer
    """

    def __init__(self, channels: int, name: str, eps: float = 1e-5, momentum: float = 0.1, groups: int = 1):
        if channels < 1:
            raise ShiftLabConfigError('A normalization layer needs at least one channel, got {}'.format(channels))
        if groups < 1 or channels % groups:
            raise ShiftLabConfigError(
                'The number of groups ({}) must divide the number of channels ({})'.format(groups, channels),
                key='train.groups'
            )
        self.gamma = Param(np.ones(channels), name + '.gamma', decay=False)
        self.beta = Param(np.zeros(channels), name + '.beta', decay=False)
        self.eps = eps
        self.momentum = momentum
        self.groups = groups
        self.running_mean_src = np.zeros(channels)
        self.running_var_src = np.ones(channels)
        self.running_mean_tgt = np.zeros(channels)
        self.running_var_tgt = np.ones(channels)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def update_source(self, mean: np.ndarray, var: np.ndarray):
        self.running_mean_src = (1 - self.momentum) * self.running_mean_src + self.momentum * mean
        self.running_var_src = (1 - self.momentum) * self.running_var_src + self.momentum * var

    def update_target(self, mean: np.ndarray, var: np.ndarray):
        self.running_mean_tgt = (1 - self.momentum) * self.running_mean_tgt + self.momentum * mean
        self.running_var_tgt = (1 - self.momentum) * self.running_var_tgt + self.momentum * var


def _standardize(x: Tensor, groups: typing.Sequence[typing.Tuple[np.ndarray, np.ndarray]], eps: float,
                 tape: typing.Optional[Tape]) -> typing.Tuple[Tensor, typing.List[typing.Tuple[np.ndarray, np.ndarray]]]:
    """
    Column-wise standardization where the statistics of each group come from one set of rows and are applied to
    another set of rows. Every row of x must be in exactly one apply set

    :param groups: (stat_rows, apply_rows) index pairs
    :return: The standardized tensor and the biased (mean, variance) of every group
    """
    out = np.empty_like(x.data)
    stats = []
    cache = []
    for stat_rows, apply_rows in groups:
        mean = x.data[stat_rows].mean(axis=0)
        var = x.data[stat_rows].var(axis=0)
        inv_std = 1.0 / np.sqrt(var + eps)
        out[apply_rows] = (x.data[apply_rows] - mean) * inv_std
        stats.append((mean, var))
        cache.append((stat_rows, apply_rows, mean, inv_std))

    def _backward(g):
        grad = np.zeros_like(x.data)
        for stat_rows, apply_rows, mean, inv_std in cache:
            g_apply = g[apply_rows]
            grad[apply_rows] += g_apply * inv_std
            d_mean = -inv_std * g_apply.sum(axis=0)
            d_var = -0.5 * inv_std ** 3 * (g_apply * (x.data[apply_rows] - mean)).sum(axis=0)
            n = len(stat_rows)
            grad[stat_rows] += d_mean / n + d_var * 2.0 * (x.data[stat_rows] - mean) / n
        return grad,

    return _record(tape, (x,), Tensor(out), _backward), stats


def _standardize_fixed(x: Tensor, mean: np.ndarray, var: np.ndarray, eps: float,
                       tape: typing.Optional[Tape]) -> Tensor:
    """
    Standardization with constant statistics (broadcast against x), as used at inference
    """
    inv_std = 1.0 / np.sqrt(var + eps)
    out = Tensor((x.data - mean) * inv_std)
    return _record(tape, (x,), out, lambda g: (g * inv_std,))


def _standardize_groups(x: Tensor, groups: int, eps: float, tape: typing.Optional[Tape]) -> Tensor:
    """
    Standardizes every row over each of its contiguous groups of channels
    """
    batch, channels = x.shape
    size = channels // groups
    grouped = x.data.reshape(batch, groups, size)
    mean = grouped.mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(grouped.var(axis=2, keepdims=True) + eps)
    x_hat = (grouped - mean) * inv_std
    out = Tensor(x_hat.reshape(batch, channels))

    def _backward(g):
        g = g.reshape(batch, groups, size)
        grad = inv_std / size * (
                size * g - g.sum(axis=2, keepdims=True) - x_hat * (g * x_hat).sum(axis=2, keepdims=True)
        )
        return grad.reshape(batch, channels),

    return _record(tape, (x,), out, _backward)


def _affine(x_hat: Tensor, gamma: Param, beta: Param, tape: typing.Optional[Tape]) -> Tensor:
    out = Tensor(x_hat.data * gamma.data + beta.data)

    def _backward(g):
        return g * gamma.data, (g * x_hat.data).sum(axis=0), g.sum(axis=0)

    return _record(tape, (x_hat, gamma, beta), out, _backward)


def _scale_channels(x: Tensor, factor: np.ndarray, tape: typing.Optional[Tape]) -> Tensor:
    out = Tensor(x.data * factor)
    return _record(tape, (x,), out, lambda g: (g * factor,))


def _check_channels(x: Tensor, state: NormState):
    if x.data.ndim != 2 or x.shape[1] != state.channels:
        raise ShiftLabDimensionError(
            'A normalization layer over {} channels cannot normalize a batch of shape {}'.format(state.channels, x.shape)
        )


def _domain_rows(mask: np.ndarray, batch: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (batch,):
        raise ShiftLabConfigError('The domain mask has {} entries for a batch of {}'.format(mask.size, batch))
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def batch_norm(x: Tensor, state: NormState, training: bool, tape: typing.Optional[Tape],
               update_running: bool = True) -> Tensor:
    """
    Normalizes with the statistics of the full batch, ignoring which domain each row comes from. Running statistics
    are kept in the source slot only
    """
    _check_channels(x, state)
    if training:
        if x.shape[0] < 2:
            raise ShiftLabBatchError('batch too small for batch statistics ({} row)'.format(x.shape[0]))
        rows = np.arange(x.shape[0])
        x_hat, [(mean, var)] = _standardize(x, [(rows, rows)], state.eps, tape)
        if update_running:
            state.update_source(mean, var)
    else:
        x_hat = _standardize_fixed(x, state.running_mean_src, state.running_var_src, state.eps, tape)
    return _affine(x_hat, state.gamma, state.beta, tape)


def group_norm(x: Tensor, state: NormState, tape: typing.Optional[Tape]) -> Tensor:
    """
    Normalizes every sample on its own over groups of channels; training and inference behave identically
    """
    _check_channels(x, state)
    if state.channels % state.groups:
        raise ShiftLabConfigError(
            'The number of groups ({}) must divide the number of channels ({})'.format(state.groups, state.channels),
            key='train.groups'
        )
    return _affine(_standardize_groups(x, state.groups, state.eps, tape), state.gamma, state.beta, tape)


def weight_standardize(w: Tensor, tape: typing.Optional[Tape], eps: float = WS_EPS) -> Tensor:
    """
    Standardizes every output column of an I×O weight matrix to zero mean and unit variance. Gradients flow through
    the standardization back into w
    """
    if w.data.ndim != 2 or w.shape[0] < 2:
        raise ShiftLabConfigError(
            'Weight standardization needs at least two inputs per output, got a weight of shape {}'.format(w.shape)
        )
    rows = np.arange(w.shape[0])
    standardized, _ = _standardize(w, [(rows, rows)], eps, tape)
    return standardized


def dan_norm(x: Tensor, mask: np.ndarray, state: NormState, training: bool, tape: typing.Optional[Tape],
             update_running: bool = True) -> Tensor:
    """
    Normalizes source and target rows alike with statistics computed from the source rows only
    """
    _check_channels(x, state)
    if training:
        source, _ = _domain_rows(mask, x.shape[0])
        if source.size < 2:
            raise ShiftLabBatchError(
                'Domain agnostic normalization needs at least 2 source rows, got {}'.format(source.size)
            )
        x_hat, [(mean, var)] = _standardize(x, [(source, np.arange(x.shape[0]))], state.eps, tape)
        if update_running:
            state.update_source(mean, var)
    else:
        x_hat = _standardize_fixed(x, state.running_mean_src, state.running_var_src, state.eps, tape)
    return _affine(x_hat, state.gamma, state.beta, tape)


def transferability_alpha(stats_src: typing.Tuple[np.ndarray, np.ndarray],
                          stats_tgt: typing.Tuple[np.ndarray, np.ndarray], eps: float) -> np.ndarray:
    """
    Weights every channel by how close its source and target statistics are. The weights are positive and sum to the
    number of channels

    :param stats_src: The source (mean, variance) per channel
    :param stats_tgt: The target (mean, variance) per channel
    """
    mean_src, var_src = stats_src
    mean_tgt, var_tgt = stats_tgt
    distance = np.abs(mean_src / np.sqrt(var_src + eps) - mean_tgt / np.sqrt(var_tgt + eps))
    closeness = 1.0 / (1.0 + distance)
    return len(closeness) * closeness / closeness.sum()


def trans_norm(x: Tensor, mask: np.ndarray, state: NormState, training: bool, tape: typing.Optional[Tape],
               update_running: bool = True) -> Tensor:
    """
    Normalizes each domain with its own statistics, then scales every channel by 1 + alpha, its transferability.
    Alpha is a constant of the backward pass
    """
    _check_channels(x, state)
    source, target = _domain_rows(mask, x.shape[0])
    if training:
        if source.size < 2 or target.size < 2:
            raise ShiftLabBatchError(
                'Transferable normalization needs at least 2 rows of each domain, got {} source and {} target'.format(
                    source.size, target.size
                )
            )
        x_hat, [stats_src, stats_tgt] = _standardize(x, [(source, source), (target, target)], state.eps, tape)
        alpha = transferability_alpha(stats_src, stats_tgt, state.eps)
        if update_running:
            state.update_source(*stats_src)
            state.update_target(*stats_tgt)
    else:
        is_source = np.asarray(mask, dtype=bool)[:, None]
        mean = np.where(is_source, state.running_mean_src, state.running_mean_tgt)
        var = np.where(is_source, state.running_var_src, state.running_var_tgt)
        x_hat = _standardize_fixed(x, mean, var, state.eps, tape)
        alpha = transferability_alpha(
            (state.running_mean_src, state.running_var_src),
            (state.running_mean_tgt, state.running_var_tgt),
            state.eps
        )
    return _scale_channels(_affine(x_hat, state.gamma, state.beta, tape), 1.0 + alpha, tape)


class NormLayer(abc.ABC):
    """
    A normalization layer: a NormState plus the rule for normalizing a batch with it
    """
    kind: NormKind

    def __init__(self, state: NormState):
        self.state = state

    @abc.abstractmethod
    def forward(self, x: Tensor, mask: np.ndarray, training: bool, tape: typing.Optional[Tape],
                update_running: bool = True) -> Tensor:
        """
        :param x: A B×C batch
        :param mask: One flag per row, True for source rows
        :param training: True to normalize with batch statistics, False to use the running statistics
        :param update_running: False to leave the running statistics untouched by a training-mode pass
        """

    def params(self) -> typing.List[Param]:
        return [self.state.gamma, self.state.beta]


class BatchNormLayer(NormLayer):
    kind = NormKind.BatchNorm

    def forward(self, x, mask, training, tape, update_running=True):
        return batch_norm(x, self.state, training, tape, update_running)


class GroupNormLayer(NormLayer):
    """
    Group normalization. The linear layers in front of it standardize their weights
    """
    kind = NormKind.GroupNormWS

    def forward(self, x, mask, training, tape, update_running=True):
        return group_norm(x, self.state, tape)


class DomainAgnosticNormLayer(NormLayer):
    kind = NormKind.DomainAgnostic

    def forward(self, x, mask, training, tape, update_running=True):
        return dan_norm(x, mask, self.state, training, tape, update_running)


class TransNormLayer(NormLayer):
    kind = NormKind.TransNorm

    def forward(self, x, mask, training, tape, update_running=True):
        return trans_norm(x, mask, self.state, training, tape, update_running)


_LAYERS = {
    NormKind.BatchNorm: BatchNormLayer,
    NormKind.GroupNormWS: GroupNormLayer,
    NormKind.DomainAgnostic: DomainAgnosticNormLayer,
    NormKind.TransNorm: TransNormLayer,
}


def make_norm(kind: NormKind, channels: int, name: str, groups: int = 1, eps: float = 1e-5,
              momentum: float = 0.1) -> NormLayer:
    """
    Creates a normalization layer of the given kind with gamma = 1 and beta = 0
    """
    groups = groups if kind is NormKind.GroupNormWS else 1
    return _LAYERS[kind](NormState(channels, name, eps=eps, momentum=momentum, groups=groups))
