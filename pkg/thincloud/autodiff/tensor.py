'''Dense tensor and trainable parameter.

A ``Tensor`` is an immutable, row-major ``numpy`` array plus an optional reference to the
``Tape`` recording it. A ``Param`` is the mutable side: a named value updated by optimizers
between steps, with a gradient accumulator of identical shape.
'''

import numpy as np
from ..common.exception import (DimensionError, UsageError)


DEFAULT_DTYPE = np.float32
SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def default_eps(dtype) -> float:
    '''Guard value for normalization and denominators at the given precision.'''
    return 1e-12 if np.dtype(dtype)==np.float64 else 1e-6


def _as_float_array(data, dtype=None) -> np.ndarray:
    if dtype is None:
        dtype = data.dtype if isinstance(data, np.ndarray) and \
                            data.dtype in SUPPORTED_DTYPES else DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in SUPPORTED_DTYPES:
        raise UsageError(f'Unsupported precision: {dtype}.')
    return np.array(data, dtype=dtype)


class Tensor:
    '''Immutable dense tensor.'''

    def __init__(self, data, dtype=None) -> None:
        '''Create a constant tensor, i.e. not recorded on any tape.

        Args:
            data (array_like): Values, copied.
            dtype (optional): ``np.float32`` (default) or ``np.float64``; inferred from a
                floating ``ndarray`` input.
        '''
        arr = _as_float_array(data, dtype)
        arr.setflags(write=False)
        self.__data = arr
        self.__tape = None


    @classmethod
    def wrap(cls, data:np.ndarray, tape=None) -> "Tensor":
        '''Wrap an array produced by a primitive without copying it.'''
        t = cls.__new__(cls)
        data.setflags(write=False)
        t.__data = data
        t.__tape = tape
        return t


    def __repr__(self) -> str:
        on_tape = ', taped' if self.__tape is not None else ''
        return f'{self.__class__.__name__}(shape={self.shape}, dtype={self.dtype}{on_tape})'

    @property
    def data(self) -> np.ndarray:
        '''Read-only view of the values.'''
        return self.__data

    @property
    def shape(self) -> tuple:
        '''Extents.'''
        return self.__data.shape

    @property
    def ndim(self) -> int:
        '''Number of axes.'''
        return self.__data.ndim

    @property
    def size(self) -> int:
        '''Number of elements, i.e. product of shape.'''
        return self.__data.size

    @property
    def dtype(self):
        '''Element precision.'''
        return self.__data.dtype

    @property
    def tape(self):
        '''The tape recording this tensor, or None for a constant.'''
        return self.__tape

    @property
    def requires_grad(self) -> bool:
        '''Whether gradients flow back through this tensor.'''
        return self.__tape is not None

    def numpy(self) -> np.ndarray:
        '''Writable copy of the values.'''
        return self.__data.copy()

    def item(self) -> float:
        '''Value of a single-element tensor.'''
        if self.size!=1:
            raise DimensionError(f'item() needs a single element, got shape {self.shape}.')
        return float(self.__data.reshape(-1)[0])


    # ------------------------------
    # operators, scalar broadcasting only
    # ------------------------------
    def __add__(self, other):
        from . import ops
        if isinstance(other, Tensor): return ops.add(self, other)
        return ops.add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        if isinstance(other, Tensor): return ops.sub(self, other)
        return ops.add_scalar(self, -other)

    def __rsub__(self, other):
        from . import ops
        return ops.add_scalar(ops.scale(self, -1.0), other)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, Tensor): return ops.mul(self, other)
        return ops.scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor): return ops.div(self, other)
        return ops.scale(self, 1.0/other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


class Param:
    '''Named trainable value with gradient accumulator.'''

    def __init__(self, name:str, value, dtype=None) -> None:
        '''Trainable parameter.

        Args:
            name (str): Unique name, used by checkpoints and optimizers.
            value (array_like): Initial value, copied.
            dtype (optional): Precision, see ``Tensor``.
        '''
        self.name = name
        self.__value = _as_float_array(value, dtype)
        self.__grad = np.zeros_like(self.__value)

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({self.name}, shape={self.shape})'

    @property
    def value(self) -> np.ndarray:
        '''Current value.'''
        return self.__value

    @value.setter
    def value(self, value):
        '''Replace value, keeping shape and precision.'''
        value = np.asarray(value)
        if value.shape!=self.__value.shape:
            raise DimensionError(f'{self.name}: expect shape {self.shape}, got {value.shape}.')
        self.__value = value.astype(self.__value.dtype, copy=True)

    @property
    def grad(self) -> np.ndarray:
        '''Accumulated gradient.'''
        return self.__grad

    @property
    def shape(self) -> tuple:
        '''Extents.'''
        return self.__value.shape

    @property
    def size(self) -> int:
        '''Number of elements.'''
        return self.__value.size

    @property
    def dtype(self):
        '''Element precision.'''
        return self.__value.dtype

    def tensor(self) -> Tensor:
        '''Constant snapshot of the current value.'''
        return Tensor(self.__value)

    def accumulate(self, grad:np.ndarray):
        '''Add gradient contribution.'''
        if grad.shape!=self.__grad.shape:
            raise DimensionError(f'{self.name}: gradient shape {grad.shape} != {self.shape}.')
        self.__grad += grad.astype(self.__grad.dtype, copy=False)

    def zero_grad(self):
        '''Reset the gradient accumulator.'''
        self.__grad = np.zeros_like(self.__value)
