import typing

import numpy as np
from scipy import special

from .errors import ShiftLabDimensionError, ShiftLabStaleTapeError, ShiftLabBatchError

BCE_EPS = 1e-7
"""Probabilities are clamped to [BCE_EPS, 1 - BCE_EPS] before any logarithm is taken"""


class Tensor:
    """
    A dense n-dimensional array of doubles, stored row-major, that can receive a gradient during a backward pass
    """

    def __init__(self, data, name: str = None, requires_grad: bool = False):
        """
        :param data: Anything numpy can turn into an array of floats. The values are copied
        :param name: An optional name, used in error messages and as the key of optimizer state
        :param requires_grad: True if backward() should store the gradient of this tensor in its grad field. Params
            always require a gradient; intermediate results never do
        """
        self.data = np.array(data, dtype=np.float64)
        self.name = name
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def shape(self) -> typing.Tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        """
        Returns the value of a single element tensor as a python float
        """
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        return 'Tensor(name={}, shape={})'.format(self.name, self.shape)


class Param(Tensor):
    """
    A trainable tensor. Its gradient is zero-initialised and accumulates over backward passes until an optimizer step
    zeroes it again
    """

    def __init__(self, data, name: str, decay: bool = True):
        """
        :param decay: True if L2 regularisation applies to this parameter (weights), False for biases and the
            scale/shift of normalization layers
        """
        super().__init__(data, name=name, requires_grad=True)
        self.decay = decay

    @property
    def value(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return 'Param(name={}, shape={}, decay={})'.format(self.name, self.shape, self.decay)


class _Record(typing.NamedTuple):
    inputs: typing.Tuple[Tensor, ...]
    output: Tensor
    backward: typing.Callable[[np.ndarray], typing.Sequence[typing.Optional[np.ndarray]]]


class Tape:
    """
    An ordered record of the primitive operations executed in a forward pass
    """

    def __init__(self):
        self._records = []
        self._consumed = False

    def record(self, inputs: typing.Sequence[Tensor], output: Tensor,
               backward: typing.Callable[[np.ndarray], typing.Sequence[typing.Optional[np.ndarray]]]):
        """
        Appends one operation to the tape

        :param inputs: The tensors the operation read
        :param output: The tensor the operation produced
        :param backward: A function that maps the gradient of the output onto one gradient (or None) per input
        """
        if self._consumed:
            raise ShiftLabStaleTapeError('Cannot record on a tape that has already been replayed, clear it first')
        self._records.append(_Record(tuple(inputs), output, backward))

    def clear(self):
        """
        Drops every record, so that the tape can be used for a new forward pass
        """
        self._records = []
        self._consumed = False

    @property
    def consumed(self) -> bool:
        return self._consumed

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)


def _record(tape: typing.Optional[Tape], inputs, output: Tensor, backward) -> Tensor:
    if tape is not None:
        tape.record(inputs, output, backward)
    return output


def backward(loss: Tensor, tape: Tape):
    """
    Replays the tape in reverse execution order, accumulating d(loss)/d(tensor) into the grad field of every tensor
    that requires a gradient. Gradients of tensors that the loss does not depend on are left unchanged

    :param loss: A single element tensor produced by an operation recorded on the tape
    :param tape: The tape the forward pass was recorded on. It is consumed by this call
    """
    if tape.consumed:
        raise ShiftLabStaleTapeError('This tape has already been replayed; record a new forward pass first')
    if loss.data.size != 1:
        raise ShiftLabDimensionError('backward() needs a scalar loss, got a tensor of shape {}'.format(loss.shape))
    if not any(record.output is loss for record in tape):
        raise ShiftLabStaleTapeError('The loss {!r} was not produced by an operation on this tape'.format(loss))

    grads = {id(loss): np.ones_like(loss.data)}
    for record in reversed(list(tape)):
        upstream = grads.pop(id(record.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(record.inputs, record.backward(upstream)):
            if grad is None:
                continue
            if tensor.requires_grad:
                tensor.grad += grad
            elif id(tensor) in grads:
                grads[id(tensor)] = grads[id(tensor)] + grad
            else:
                grads[id(tensor)] = grad
    tape._consumed = True


def _check_matrix(x: Tensor, what: str):
    if x.data.ndim != 2:
        raise ShiftLabDimensionError('{} must be a matrix, got shape {}'.format(what, x.shape))


def linear_forward(x: Tensor, w: Tensor, b: Tensor, tape: typing.Optional[Tape]) -> Tensor:
    """
    Computes y = x·w + b

    :param x: A B×I input
    :param w: An I×O weight matrix (a Param, or standardized weights derived from one)
    :param b: An O bias vector
    """
    _check_matrix(x, 'The input')
    _check_matrix(w, 'The weight')
    if x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShiftLabDimensionError(
            'Cannot apply a linear layer with weight {} and bias {} to an input of shape {}'.format(
                w.shape, b.shape, x.shape
            )
        )
    out = Tensor(x.data @ w.data + b.data)

    def _backward(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _record(tape, (x, w, b), out, _backward)


def relu_forward(x: Tensor, tape: typing.Optional[Tape]) -> Tensor:
    """
    Elementwise max(0, x). The subgradient at exactly 0 is 0
    """
    active = x.data > 0
    out = Tensor(np.where(active, x.data, 0.0))
    return _record(tape, (x,), out, lambda g: (g * active,))


def sigmoid_forward(x: Tensor, tape: typing.Optional[Tape]) -> Tensor:
    out = Tensor(special.expit(x.data))
    return _record(tape, (x,), out, lambda g: (g * out.data * (1.0 - out.data),))


def reshape(x: Tensor, shape: typing.Tuple[int, ...], tape: typing.Optional[Tape]) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _record(tape, (x,), out, lambda g: (g.reshape(x.shape),))


def take_rows(x: Tensor, rows: np.ndarray, tape: typing.Optional[Tape]) -> Tensor:
    """
    Selects the given rows of a matrix. Rows may repeat; their gradients are summed
    """
    rows = np.asarray(rows, dtype=np.intp)
    out = Tensor(x.data[rows])

    def _backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, rows, g)
        return grad,

    return _record(tape, (x,), out, _backward)


def sum_all(x: Tensor, tape: typing.Optional[Tape]) -> Tensor:
    out = Tensor(x.data.sum())
    return _record(tape, (x,), out, lambda g: (np.full_like(x.data, g),))


def scale(x: Tensor, factor: float, tape: typing.Optional[Tape]) -> Tensor:
    out = Tensor(x.data * factor)
    return _record(tape, (x,), out, lambda g: (g * factor,))


def softmax(logits: np.ndarray) -> np.ndarray:
    """
    Row-wise softmax of a B×C array. This is not recorded on any tape
    """
    return special.softmax(logits, axis=1)


def softmax_cross_entropy(logits: Tensor, labels: typing.Sequence[int], tape: typing.Optional[Tape]) -> Tensor:
    """
    Mean over the batch of -log softmax(logits)[label]

    :param logits: A B×C matrix
    :param labels: B class indices in [0, C)
    """
    _check_matrix(logits, 'The logits')
    labels = np.asarray(labels, dtype=np.intp)
    batch, classes = logits.shape
    if batch == 0:
        raise ShiftLabBatchError('Cannot compute a cross-entropy loss over an empty batch')
    if labels.shape != (batch,):
        raise ShiftLabDimensionError(
            'Expected {} labels for logits of shape {}, got {}'.format(batch, logits.shape, labels.shape)
        )
    bad = (labels < 0) | (labels >= classes)
    if bad.any():
        raise ShiftLabBatchError('The label {} is out of range [0, {})'.format(labels[bad][0], classes))

    log_probs = special.log_softmax(logits.data, axis=1)
    rows = np.arange(batch)
    out = Tensor(-log_probs[rows, labels].mean())

    def _backward(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return g * grad / batch,

    return _record(tape, (logits,), out, _backward)


def binary_cross_entropy(p: Tensor, targets: typing.Sequence[float], tape: typing.Optional[Tape]) -> Tensor:
    """
    Mean of -[t·log p + (1-t)·log(1-p)] with p clamped to [BCE_EPS, 1 - BCE_EPS]

    :param p: B probabilities
    :param targets: B targets in {0, 1}
    """
    targets = np.asarray(targets, dtype=np.float64)
    if p.data.ndim != 1 or targets.shape != p.shape:
        raise ShiftLabDimensionError(
            'Binary cross-entropy needs matching vectors, got {} and {}'.format(p.shape, targets.shape)
        )
    if p.shape[0] == 0:
        raise ShiftLabBatchError('Cannot compute a binary cross-entropy loss over an empty batch')

    clamped = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (p.data >= BCE_EPS) & (p.data <= 1.0 - BCE_EPS)
    out = Tensor(-np.mean(targets * np.log(clamped) + (1.0 - targets) * np.log(1.0 - clamped)))

    def _backward(g):
        grad = (-targets / clamped + (1.0 - targets) / (1.0 - clamped)) / p.shape[0]
        return g * grad * inside,

    return _record(tape, (p,), out, _backward)
