'''Adversarial and reconstruction losses.

* ``d_loss = -mean(log D(x, y)) - mean(log(1 - D(x, G(x))))``
* ``g_adv_loss = -mean(log D(x, G(x)))``, or ``mean(log(1 - D(x, G(x))))`` when saturating
* ``l1_loss = 1/(C*H*W) * sum_c lambda_c * sum_hw |y - G(x)|``

Logs use natural logarithm with probabilities clamped to ``[eps, 1-eps]``.
'''

from dataclasses import dataclass
from typing import (Sequence, Union)
import numpy as np
from ..autodiff import ops
from ..autodiff.tensor import Tensor
from ..common.exception import (ConfigError, DimensionError)


@dataclass(frozen=True)
class GanLossParams:
    '''Loss weights and labels.'''
    lambda_c: Union[float, Sequence[float]] = 100.0
    eps: float = 1e-7
    real_label: float = 1.0
    fake_label: float = 0.0
    saturating: bool = False

    def validate(self):
        weights = np.atleast_1d(np.asarray(self.lambda_c, dtype=np.float64))
        if weights.ndim!=1 or weights.size==0 or not np.all(np.isfinite(weights)) or np.any(weights<0):
            raise ConfigError(f'lambda_c must be nonnegative, got {self.lambda_c}.')
        if not 0<self.eps<0.5:
            raise ConfigError(f'Log clamp eps must be in (0, 0.5), got {self.eps}.')
        for label in (self.real_label, self.fake_label):
            if not 0.0<=label<=1.0: raise ConfigError(f'Label {label} outside [0, 1].')


def _channel_weights(lambda_c, shape:tuple, dtype) -> Tensor:
    '''Constant ``C x H x W`` tensor holding ``lambda_c`` of each channel.'''
    weights = np.atleast_1d(np.asarray(lambda_c, dtype=np.float64))
    C = shape[0]
    if weights.size==1:
        weights = np.full(C, weights[0])
    elif weights.size!=C:
        raise DimensionError(f'{weights.size} channel weights for {C} channels.')
    full = np.broadcast_to(weights.reshape((C,) + (1,)*(len(shape)-1)), shape)
    return Tensor(full, dtype=dtype)


def l1_loss(gt, gen, lambda_c=100.0) -> Tensor:
    '''Channel-weighted mean absolute error.'''
    gt, gen = ops.as_tensor(gt), ops.as_tensor(gen)
    if gt.shape!=gen.shape:
        raise DimensionError(f'l1_loss: shape {gt.shape} != {gen.shape}.')
    weights = _channel_weights(lambda_c, gt.shape, np.result_type(gt.dtype, gen.dtype))
    return ops.mean_all(ops.mul(ops.absolute(ops.sub(gt, gen)), weights))


def mean_log(p, eps:float=1e-7) -> Tensor:
    '''``mean(log(clamp(p, eps, 1-eps)))``'''
    return ops.mean_all(ops.log_clamped(p, eps))


def mean_log_complement(p, eps:float=1e-7) -> Tensor:
    '''``mean(log(clamp(1-p, eps, 1-eps)))``'''
    return ops.mean_all(ops.log_clamped(1.0 - ops.as_tensor(p), eps))


def bce(p, label:float, eps:float=1e-7) -> Tensor:
    '''Binary cross entropy of probabilities `p` against a hard or soft label.'''
    terms = []
    if label!=0.0: terms.append(mean_log(p, eps) * label)
    if label!=1.0: terms.append(mean_log_complement(p, eps) * (1.0-label))
    total = terms[0] if len(terms)==1 else ops.add(*terms)
    return -total


def d_loss(d_real, d_fake, params:GanLossParams=None) -> Tensor:
    '''Discriminator loss on real pairs and generated pairs.'''
    params = params or GanLossParams()
    return ops.add(bce(d_real, params.real_label, params.eps),
                   bce(d_fake, params.fake_label, params.eps))


def g_adv_loss(d_fake, params:GanLossParams=None) -> Tensor:
    '''Adversarial generator loss.'''
    params = params or GanLossParams()
    if params.saturating:
        return mean_log_complement(d_fake, params.eps)
    return bce(d_fake, params.real_label, params.eps)


def minimax_value(d_real, d_fake, eps:float=1e-7) -> Tensor:
    '''Value of the two-player game on the given discriminator outputs, ``-d_loss``.'''
    return ops.add(mean_log(d_real, eps), mean_log_complement(d_fake, eps))
