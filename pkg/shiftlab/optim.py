import typing

import numpy as np

from .errors import ShiftLabConfigError
from .tensor import Param, Tape, Tensor, backward


def zero_grad(params: typing.Iterable[Param]):
    for param in params:
        param.grad[...] = 0.0


def sgd_step(params: typing.Iterable[Param], lr: float, l2: float = 0.0, momentum: float = 0.0,
             velocity: typing.Optional[typing.Dict[str, np.ndarray]] = None):
    """
    Applies value <- value - lr·(grad + l2·value) to every parameter (the L2 term only where param.decay is set), then
    zeroes the gradients

    :param lr: The learning rate. Zero leaves every value unchanged
    :param l2: The L2 regularisation strength
    :param momentum: Heavy-ball momentum. With the default of 0 this is plain SGD
    :param velocity: The momentum buffers of one optimizer, keyed by parameter name. Required when momentum > 0
    """
    if lr < 0:
        raise ShiftLabConfigError('The learning rate must not be negative, got {}'.format(lr), key='train.lr')
    if l2 < 0:
        raise ShiftLabConfigError('The L2 strength must not be negative, got {}'.format(l2), key='train.l2')
    if momentum and velocity is None:
        raise ShiftLabConfigError('A momentum step needs a velocity buffer', key='train.momentum')

    for param in params:
        step = param.grad + l2 * param.data if param.decay else param.grad.copy()
        if momentum:
            previous = velocity.get(param.name)
            if previous is not None:
                step = momentum * previous + step
            velocity[param.name] = step
        param.data -= lr * step
        param.grad[...] = 0.0


def grad_check(f: typing.Callable[[typing.Optional[Tape]], Tensor], params: typing.Sequence[Param],
               eps: float = 1e-5) -> float:
    """
    Compares the gradients from a backward pass with central differences

    :param f: Builds the scalar loss from the current parameter values. It is called once with a tape, and then with
        None for every perturbed evaluation, so it must be deterministic
    :param params: The parameters to check. Their gradients are zero when this returns
    :param eps: The central difference step
    :return: The largest |analytic - numeric| / max(1, |analytic|, |numeric|) over every coordinate
    """
    params = list(params)
    zero_grad(params)
    tape = Tape()
    backward(f(tape), tape)
    analytic = [param.grad.copy() for param in params]
    zero_grad(params)

    worst = 0.0
    for param, grad in zip(params, analytic):
        for index in np.ndindex(*param.shape):
            original = param.data[index]
            param.data[index] = original + eps
            plus = f(None).item()
            param.data[index] = original - eps
            minus = f(None).item()
            param.data[index] = original

            numeric = (plus - minus) / (2 * eps)
            error = abs(grad[index] - numeric) / max(1.0, abs(grad[index]), abs(numeric))
            worst = max(worst, error)
    return worst
