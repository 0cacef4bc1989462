'''
Procedural clear scenes and thin-cloud opacity fields.

A cloudy sample is an alpha composite of a clear scene and a near-white tint:

```
cloudy = (1 - alpha) * clear + alpha * tint
```

where ``alpha`` is a multi-octave value-noise field: random lattices of increasing resolution,
upsampled with cubic splines, summed with halving amplitude and rescaled to ``[0, alpha_max]``.
'''

from dataclasses import dataclass
from typing import (Optional, Sequence, Tuple)
import numpy as np
from scipy.ndimage import (gaussian_filter, map_coordinates)
from ..autodiff.tensor import (DEFAULT_DTYPE, Tensor)
from ..common.exception import (ConfigError, DimensionError)


MIN_SIDE = 8


@dataclass(frozen=True)
class CloudParams:
    '''Cloud field and tint parameters.'''
    octaves: int = 3
    alpha_max: float = 0.9
    tint: Optional[Tuple[float, float, float]] = None  # None: drawn per image in [0.9, 1]
    seed: int = 0
    base_cells: int = 2          # lattice cells per side of the coarsest octave
    persistence: float = 0.5     # amplitude ratio of consecutive octaves

    def validate(self):
        if not isinstance(self.octaves, (int, np.integer)) or self.octaves<=0:
            raise ConfigError(f'octaves must be a positive int, got {self.octaves}.')
        if not 0.0<self.alpha_max<=1.0:
            raise ConfigError(f'alpha_max must be in (0, 1], got {self.alpha_max}.')
        if self.tint is not None and (len(self.tint)!=3 or not all(0.9<=c<=1.0 for c in self.tint)):
            raise ConfigError(f'Cloud tint must be three values in [0.9, 1], got {self.tint}.')
        if self.base_cells<=0 or not 0.0<self.persistence<=1.0:
            raise ConfigError('Invalid lattice size or persistence.')


def _check_side(side:int):
    if side<MIN_SIDE:
        raise ConfigError(f'Image side must be at least {MIN_SIDE}, got {side}.')


def synth_clear_image(side:int, seed:int, dtype=DEFAULT_DTYPE) -> Tensor:
    '''Seeded ``3 x side x side`` texture: linear gradient, checkerboard and low-pass filtered
    noise, mixed with random weights and rescaled per channel into a random sub-range of [0, 1].'''
    _check_side(side)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1.0)

    # gradient along a random direction
    theta = rng.uniform(0.0, 2.0*np.pi)
    gradient = np.cos(theta) * xx + np.sin(theta) * yy

    # checkerboard with random period
    period = int(rng.choice([4, 8, 16]))
    i, j = np.mgrid[0:side, 0:side]
    checker = ((i // period + j // period) % 2).astype(np.float64)

    # smooth noise
    sigma = rng.uniform(1.0, 3.0)
    noise = gaussian_filter(rng.normal(size=(3, side, side)), sigma=(0.0, sigma, sigma))

    weights = rng.dirichlet(np.ones(3), size=3) # channel x component
    image = np.empty((3, side, side))
    for c in range(3):
        mix = weights[c, 0]*gradient + weights[c, 1]*checker + weights[c, 2]*noise[c]
        lo, hi = np.sort(rng.uniform(0.05, 0.95, size=2))
        span = mix.max() - mix.min()
        unit = (mix - mix.min()) / span if span>0 else np.zeros_like(mix)
        image[c] = lo + (hi - lo) * unit
    return Tensor(image, dtype=dtype)


def synth_cloud_field(side:int, params:CloudParams=None) -> np.ndarray:
    '''Opacity field ``side x side`` with values in ``[0, alpha_max]``.'''
    params = params or CloudParams()
    params.validate()
    _check_side(side)
    rng = np.random.default_rng(params.seed)

    field = np.zeros((side, side))
    for o in range(params.octaves):
        cells = min(params.base_cells * 2**o, max(side // 4, 1))
        lattice = rng.random((cells+1, cells+1))
        coords = np.linspace(0.0, cells, side)
        yy, xx = np.meshgrid(coords, coords, indexing='ij')
        field += params.persistence**o * map_coordinates(lattice, [yy, xx], order=3, mode='nearest')

    span = field.max() - field.min()
    if span<=0: return np.zeros((side, side))
    return np.clip((field - field.min()) / span * params.alpha_max, 0.0, params.alpha_max)


def apply_cloud(clear, alpha, tint:Sequence[float]) -> Tensor:
    '''Alpha-composite `tint` over `clear` per channel.

    Args:
        clear (Tensor): ``C x H x W`` clear image in [0, 1].
        alpha (array_like): ``H x W`` opacity in [0, 1].
        tint (Sequence[float]): Cloud color, one value per channel.
    '''
    clear_t = clear if isinstance(clear, Tensor) else Tensor(clear)
    alpha = np.asarray(alpha.data if isinstance(alpha, Tensor) else alpha, dtype=np.float64)
    tint = np.asarray(tint, dtype=np.float64)
    C = clear_t.shape[0]
    if clear_t.ndim!=3 or alpha.shape!=clear_t.shape[1:]:
        raise DimensionError(f'Opacity {alpha.shape} does not match image {clear_t.shape}.')
    if tint.shape!=(C,):
        raise DimensionError(f'{tint.size} tint values for {C} channels.')
    x = clear_t.data.astype(np.float64)
    cloudy = (1.0 - alpha) * x + alpha * tint.reshape(C, 1, 1)
    return Tensor(np.clip(cloudy, 0.0, 1.0), dtype=clear_t.dtype)
