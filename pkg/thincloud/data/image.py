'''8-bit RGB image I/O and the paired sample type.'''

from dataclasses import dataclass
import numpy as np
from PIL import (Image, UnidentifiedImageError)
from ..autodiff.tensor import Tensor
from ..common.exception import (DataError, DimensionError)


@dataclass(frozen=True)
class ImagePair:
    '''Cloudy input and clear target, both ``3 x H x W`` in [0, 1].'''
    cloudy: Tensor
    clear: Tensor
    id: str = ''

    def __post_init__(self):
        if self.cloudy.shape!=self.clear.shape:
            raise DimensionError(f'Pair {self.id}: cloudy {self.cloudy.shape} vs clear {self.clear.shape}.')


def load_image(path:str, dtype=np.float32) -> Tensor:
    '''Read an 8-bit RGB file as ``3 x H x W`` values ``v/255``.'''
    try:
        with Image.open(path) as img:
            if img.mode not in ('RGB', 'L', 'RGBA', 'P'):
                raise DataError(f'Unsupported image mode {img.mode}: {path}.')
            arr = np.asarray(img.convert('RGB'), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise DataError(f'Cannot read image {path}: {e}') from e
    return Tensor(np.transpose(arr, (2, 0, 1)).astype(np.float64) / 255.0, dtype=dtype)


def to_uint8(image) -> np.ndarray:
    '''``H x W x 3`` bytes ``floor(255*v + 0.5)`` of a ``3 x H x W`` image clipped to [0, 1].'''
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim!=3 or data.shape[0]!=3:
        raise DimensionError(f'Expect 3 x H x W image, got shape {data.shape}.')
    q = np.floor(np.clip(data.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5)
    return np.transpose(q, (1, 2, 0)).astype(np.uint8)


def save_image(image, path:str):
    '''Write a ``3 x H x W`` image in [0, 1] as 8-bit RGB PNG.'''
    Image.fromarray(to_uint8(image)).save(path, format='PNG')
