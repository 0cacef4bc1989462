'''Full-reference image quality metrics.

SSIM here is global: one mean, variance and covariance per channel over the whole image, with
population statistics, and constants ``C1=(0.01L)^2``, ``C2=(0.03L)^2``, ``C3=C2/2``.
'''

from dataclasses import dataclass
import numpy as np
from ..autodiff.tensor import Tensor
from ..common.exception import (DimensionError, UsageError)


PSNR_CAP = 100.0 # stand-in for infinite PSNR in aggregates


def _pair(X, Y):
    x = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    y = np.asarray(Y.data if isinstance(Y, Tensor) else Y, dtype=np.float64)
    if x.shape!=y.shape:
        raise DimensionError(f'Image shapes differ: {x.shape} vs {y.shape}.')
    if x.size==0: raise DimensionError('Empty images.')
    return x, y


def mse(X, Y) -> float:
    '''Mean squared error over all elements, channels included.'''
    x, y = _pair(X, Y)
    return float(np.mean((x - y)**2))


def psnr(X, Y, peak:float=1.0) -> float:
    '''``10 * log10(peak^2 / mse)`` in dB; ``inf`` for identical images.'''
    if not peak>0: raise UsageError(f'Peak value must be positive, got {peak}.')
    err = mse(X, Y)
    if err==0.0: return float('inf')
    return float(10.0 * np.log10(peak * peak / err))


@dataclass(frozen=True)
class SSIMConstants:
    '''Stabilizing constants of the luminance, contrast and structure terms.'''
    c1: float
    c2: float
    c3: float

    @classmethod
    def for_range(cls, peak:float=1.0) -> "SSIMConstants":
        c2 = (0.03*peak)**2
        return cls((0.01*peak)**2, c2, c2/2.0)


def ssim_channel(x:np.ndarray, y:np.ndarray, consts:SSIMConstants) -> float:
    '''Luminance x contrast x structure of one channel.'''
    mu_x, mu_y = x.mean(), y.mean()
    dx, dy = x - mu_x, y - mu_y
    var_x, var_y = (dx*dx).mean(), (dy*dy).mean()
    cov = (dx*dy).mean()
    sd_x, sd_y = np.sqrt(var_x), np.sqrt(var_y)

    l = (2.0*mu_x*mu_y + consts.c1) / (mu_x*mu_x + mu_y*mu_y + consts.c1)
    c = (2.0*sd_x*sd_y + consts.c2) / (var_x + var_y + consts.c2)
    s = (cov + consts.c3) / (sd_x*sd_y + consts.c3)
    return float(l * c * s)


def ssim(X, Y, consts:SSIMConstants=None, peak:float=1.0) -> float:
    '''Global SSIM averaged over channels.

    Args:
        X, Y: ``C x H x W`` images, or a single ``H x W`` channel.
        consts (SSIMConstants, optional): Defaults to ``SSIMConstants.for_range(peak)``.
        peak (float, optional): Dynamic range L. Defaults to 1.0.
    '''
    x, y = _pair(X, Y)
    consts = consts or SSIMConstants.for_range(peak)
    if min(consts.c1, consts.c2, consts.c3)<=0:
        raise UsageError('SSIM constants must be positive.')
    if x.ndim==2: x, y = x[None], y[None]
    if x.ndim!=3: raise DimensionError(f'Expect C x H x W images, got shape {x.shape}.')
    return float(np.mean([ssim_channel(a, b, consts) for a, b in zip(x, y)]))
