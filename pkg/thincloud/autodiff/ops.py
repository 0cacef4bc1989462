'''
Differentiable primitives.

No implicit broadcasting: binary ops require equal shapes, the only mixed form is a tensor with
a python scalar (``scale``, ``add_scalar``). Per-channel bias has its own primitive
``bias_add``. Convolutions use the cross-correlation convention (no kernel flip) on single
images laid out as ``C x H x W``; kernels are ``C_out x C_in x k x k`` for ``conv2d`` and the
same array is consumed as ``C_in_of_y x C_out x k x k`` by its adjoint ``conv2d_transpose``.
'''

from typing import (List, Sequence, Union)
import logging
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from ..common.exception import (DimensionError, UsageError)
from .monitor import observe_clamp
from .tape import record_op
from .tensor import (Tensor, default_eps)


def as_tensor(x) -> Tensor:
    '''Tensor as is, anything else as a constant.'''
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(op:str, a:Tensor, b:Tensor):
    if a.shape!=b.shape:
        raise DimensionError(f'{op}: shape {a.shape} != {b.shape}.')


def _check_ndim(op:str, x:Tensor, ndim:int):
    if x.ndim!=ndim:
        raise DimensionError(f'{op}: expect {ndim}-d input, got shape {x.shape}.')


# ------------------------------
# linear algebra and layout
# ------------------------------
def matmul(a, b) -> Tensor:
    '''Matrix product of ``M x K`` and ``K x P``.'''
    a, b = as_tensor(a), as_tensor(b)
    _check_ndim('matmul', a, 2)
    _check_ndim('matmul', b, 2)
    if a.shape[1]!=b.shape[0]:
        raise DimensionError(f'matmul: inner dims differ, {a.shape} x {b.shape}.')
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g
    return record_op('matmul', (a, b), A @ B, backward)


def transpose(x) -> Tensor:
    '''Transpose of a matrix.'''
    x = as_tensor(x)
    _check_ndim('transpose', x, 2)
    return record_op('transpose', (x,), np.ascontiguousarray(x.data.T), lambda g: (g.T,))


def reshape(x, shape:Sequence[int]) -> Tensor:
    '''Same elements in row-major order, new extents.'''
    x = as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape))!=x.size:
        raise DimensionError(f'reshape: cannot view {x.shape} as {shape}.')
    src = x.shape
    return record_op('reshape', (x,), x.data.reshape(shape).copy(),
                     lambda g: (g.reshape(src),))


def slice_axis(x, start:int, stop:int, axis:int=0) -> Tensor:
    '''Elements ``start:stop`` along `axis`.'''
    x = as_tensor(x)
    axis = _normalize_axis('slice_axis', axis, x.ndim)
    if not 0<=start<stop<=x.shape[axis]:
        raise DimensionError(f'slice_axis: invalid range {start}:{stop} for extent {x.shape[axis]}.')
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = x.shape

    def backward(g):
        dx = np.zeros(shape, dtype=g.dtype)
        dx[index] = g
        return (dx,)
    return record_op('slice', (x,), x.data[index].copy(), backward)


def concat(xs:Sequence[Tensor], axis:int=0) -> Tensor:
    '''Join tensors along `axis`; all other extents must agree.'''
    xs = [as_tensor(x) for x in xs]
    if not xs: raise DimensionError('concat: nothing to concatenate.')
    ndim = xs[0].ndim
    axis = _normalize_axis('concat', axis, ndim)
    for x in xs[1:]:
        if x.ndim!=ndim or any(x.shape[i]!=xs[0].shape[i] for i in range(ndim) if i!=axis):
            raise DimensionError(f'concat: extent mismatch {xs[0].shape} vs {x.shape} on axis {axis}.')
    if len(xs)==1: return xs[0]
    offsets = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))
    return record_op('concat', xs, np.concatenate([x.data for x in xs], axis=axis), backward)


def split(x, sections:Union[int, Sequence[int]], axis:int=0) -> List[Tensor]:
    '''Inverse of ``concat``.

    Args:
        x (Tensor): Input.
        sections (int | Sequence[int]): Number of equal parts, or the extent of each part.
        axis (int, optional): Axis to split. Defaults to 0.
    '''
    x = as_tensor(x)
    axis = _normalize_axis('split', axis, x.ndim)
    extent = x.shape[axis]
    if isinstance(sections, int):
        if sections<=0 or extent % sections:
            raise DimensionError(f'split: extent {extent} not divisible into {sections} parts.')
        sections = [extent//sections] * sections
    if sum(sections)!=extent or min(sections)<=0:
        raise DimensionError(f'split: sections {list(sections)} do not cover extent {extent}.')
    res, start = [], 0
    for size in sections:
        res.append(slice_axis(x, start, start+size, axis))
        start += size
    return res


# ------------------------------
# row-wise ops
# ------------------------------
def softmax_rows(x) -> Tensor:
    '''Row softmax with per-row max subtraction.'''
    x = as_tensor(x)
    _check_ndim('softmax_rows', x, 2)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)
    return record_op('softmax_rows', (x,), y, backward)


def l2_normalize_rows(x, eps:float=None) -> Tensor:
    '''Row ``i`` divided by ``max(||x_i||, eps)``.'''
    x = as_tensor(x)
    _check_ndim('l2_normalize_rows', x, 2)
    eps = default_eps(x.dtype) if eps is None else eps
    if eps<=0: raise UsageError('l2_normalize_rows: eps must be positive.')
    norm = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    denom = np.maximum(norm, eps)
    y = x.data / denom
    active = norm>=eps

    def backward(g):
        proj = np.where(active, y * (g * y).sum(axis=1, keepdims=True), 0.0)
        return ((g - proj) / denom,)
    return record_op('l2_normalize_rows', (x,), y, backward)


# ------------------------------
# elementwise
# ------------------------------
class Pointwise:
    '''Predefined elementwise functions. Unary functions return ``(y, backward)`` with
    ``backward(g) -> dx``; binary ones return ``(y, backward)`` with ``backward(g) -> (dx, dy)``.
    '''

    BINARY = ('add', 'sub', 'mul', 'div')

    @classmethod
    def get(cls, name:str):
        '''Get function by name.'''
        fun = cls.__dict__.get(name, None)
        if not isinstance(fun, staticmethod):
            raise UsageError(f'Invalid pointwise function: {name}.')
        return fun.__func__

    # binary
    @staticmethod
    def add(x, y):
        '''x + y'''
        return x + y, lambda g: (g, g)

    @staticmethod
    def sub(x, y):
        '''x - y'''
        return x - y, lambda g: (g, -g)

    @staticmethod
    def mul(x, y):
        '''x * y'''
        return x * y, lambda g: (g * y, g * x)

    @staticmethod
    def div(x, y):
        '''x / y'''
        return x / y, lambda g: (g / y, -g * x / (y * y))

    # unary
    @staticmethod
    def scale(x, c:float=1.0):
        '''c * x'''
        return x * c, lambda g: g * c

    @staticmethod
    def add_scalar(x, c:float=0.0):
        '''x + c'''
        return x + c, lambda g: g

    @staticmethod
    def relu(x):
        '''max(x, 0)'''
        mask = x>0
        return np.where(mask, x, 0.0).astype(x.dtype), lambda g: np.where(mask, g, 0.0)

    @staticmethod
    def leaky_relu(x, alpha:float=0.2):
        '''x if x > 0 else alpha * x'''
        mask = x>0
        return np.where(mask, x, alpha * x).astype(x.dtype), lambda g: np.where(mask, g, alpha * g)

    @staticmethod
    def sigmoid(x):
        '''Logistic function, in tanh form for stability, kept inside the open interval (0, 1).'''
        tiny = np.finfo(x.dtype).eps
        y = np.clip(0.5 * (1.0 + np.tanh(0.5 * x)), tiny, 1.0 - tiny)
        return y, lambda g: g * y * (1.0 - y)

    @staticmethod
    def tanh(x):
        '''Hyperbolic tangent.'''
        y = np.tanh(x)
        return y, lambda g: g * (1.0 - y * y)

    @staticmethod
    def log_clamped(x, eps:float=1e-7):
        '''ln(clamp(x, eps, 1 - eps))'''
        c = np.clip(x, eps, 1.0 - eps)
        inside = (x>=eps) & (x<=1.0-eps)
        return np.log(c), lambda g: np.where(inside, g / c, 0.0)

    @staticmethod
    def abs(x):
        '''|x|'''
        return np.abs(x), lambda g: g * np.sign(x)

    @staticmethod
    def clamp_min(x, floor:float=0.0):
        '''max(x, floor); clamped elements are reported to active monitors.'''
        below = x<floor
        count = int(below.sum())
        if count:
            observe_clamp(count)
            logging.debug('clamp_min raised %d element(s) to %g.', count, floor)
        return np.where(below, floor, x).astype(x.dtype), lambda g: np.where(below, 0.0, g)


def pointwise(x, f:str, y=None, **kwargs) -> Tensor:
    '''Apply elementwise function `f`.

    Args:
        x (Tensor): First operand.
        f (str): Name of a ``Pointwise`` function.
        y (Tensor, optional): Second operand of binary functions, same shape as `x`.
        **kwargs: Scalar parameters, e.g. ``alpha`` of ``leaky_relu``.
    '''
    fun = Pointwise.get(f)
    x = as_tensor(x)
    if f in Pointwise.BINARY:
        if y is None: raise UsageError(f'{f} needs two operands.')
        y = as_tensor(y)
        _check_same_shape(f, x, y)
        out, local = fun(x.data, y.data)
        dtype = np.result_type(x.dtype, y.dtype)
        return record_op(f, (x, y), np.asarray(out, dtype=dtype), local)

    out, local = fun(x.data, **kwargs)
    return record_op(f, (x,), np.asarray(out, dtype=x.dtype), lambda g: (local(g),))


def add(x, y) -> Tensor: return pointwise(x, 'add', y)
def sub(x, y) -> Tensor: return pointwise(x, 'sub', y)
def mul(x, y) -> Tensor: return pointwise(x, 'mul', y)
def div(x, y) -> Tensor: return pointwise(x, 'div', y)
def scale(x, c:float) -> Tensor: return pointwise(x, 'scale', c=c)
def add_scalar(x, c:float) -> Tensor: return pointwise(x, 'add_scalar', c=c)
def relu(x) -> Tensor: return pointwise(x, 'relu')
def leaky_relu(x, alpha:float=0.2) -> Tensor: return pointwise(x, 'leaky_relu', alpha=alpha)
def sigmoid(x) -> Tensor: return pointwise(x, 'sigmoid')
def tanh(x) -> Tensor: return pointwise(x, 'tanh')
def log_clamped(x, eps:float=1e-7) -> Tensor: return pointwise(x, 'log_clamped', eps=eps)
def absolute(x) -> Tensor: return pointwise(x, 'abs')
def clamp_min(x, floor:float) -> Tensor: return pointwise(x, 'clamp_min', floor=floor)


def bias_add(x, b) -> Tensor:
    '''Add ``b[c]`` to every element of channel ``c`` (axis 0).'''
    x, b = as_tensor(x), as_tensor(b)
    _check_ndim('bias_add', b, 1)
    if x.ndim<1 or x.shape[0]!=b.shape[0]:
        raise DimensionError(f'bias_add: {b.shape[0]} biases for shape {x.shape}.')
    expand = (-1,) + (1,) * (x.ndim-1)
    other_axes = tuple(range(1, x.ndim))

    def backward(g):
        return g, g.sum(axis=other_axes)
    out = x.data + b.data.reshape(expand)
    return record_op('bias_add', (x, b), out.astype(np.result_type(x.dtype, b.dtype)), backward)


# ------------------------------
# reductions
# ------------------------------
def _normalize_axis(op:str, axis:int, ndim:int) -> int:
    if not -ndim<=axis<ndim:
        raise DimensionError(f'{op}: invalid axis {axis} for {ndim}-d tensor.')
    return axis % ndim


def reduce(x, kind:str='sum', axes=None, keepdims:bool=False) -> Tensor:
    '''Sum or mean over `axes` (all axes if None).'''
    x = as_tensor(x)
    if kind not in ('sum', 'mean'):
        raise UsageError(f'reduce: invalid kind {kind}.')
    if axes is None:
        axes = tuple(range(x.ndim))
    elif isinstance(axes, int):
        axes = (axes,)
    axes = tuple(sorted({_normalize_axis('reduce', a, x.ndim) for a in axes}))
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.sum(axis=axes, keepdims=keepdims)
    if kind=='mean': out = out / count
    kept = tuple(1 if i in axes else n for i, n in enumerate(x.shape))
    shape = x.shape

    def backward(g):
        g = np.broadcast_to(np.reshape(g, kept), shape)
        return ((g / count if kind=='mean' else g).copy(),)
    return record_op(kind, (x,), np.asarray(out, dtype=x.dtype), backward)


def sum_all(x) -> Tensor: return reduce(x, 'sum')
def mean_all(x) -> Tensor: return reduce(x, 'mean')


# ------------------------------
# convolution
# ------------------------------
def conv_extent(size:int, k:int, stride:int, pad:int) -> int:
    '''Output extent of a convolution; error if not integral.'''
    span = size + 2*pad - k
    if stride<=0 or pad<0 or span<0 or span % stride:
        raise DimensionError(f'conv2d: ({size}+2*{pad}-{k})/{stride} is not a valid extent.')
    return span // stride + 1


def _windows(xp:np.ndarray, k:int, stride:int) -> np.ndarray:
    '''Strided ``k x k`` windows of a padded ``C x H x W`` array: ``C x H' x W' x k x k``.'''
    return sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]


def _conv2d_data(x:np.ndarray, w:np.ndarray, stride:int, pad:int):
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = _windows(xp, w.shape[2], stride)
    return np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4])), win


def _conv2d_transpose_data(y:np.ndarray, w:np.ndarray, stride:int, pad:int) -> np.ndarray:
    _, c_out, k, _ = w.shape
    _, h, wd = y.shape
    hf, wf = (h-1)*stride + k, (wd-1)*stride + k
    full = np.zeros((c_out, hf, wf), dtype=np.result_type(y.dtype, w.dtype))
    contrib = np.tensordot(w, y, axes=([0], [0])) # c_out x k x k x h x w
    for a in range(k):
        for b in range(k):
            full[:, a:a+(h-1)*stride+1:stride, b:b+(wd-1)*stride+1:stride] += contrib[:, a, b]
    return np.ascontiguousarray(full[:, pad:hf-pad, pad:wf-pad])


def _check_kernel(op:str, x:Tensor, w:Tensor, channel_axis:int):
    _check_ndim(op, x, 3)
    _check_ndim(op, w, 4)
    if w.shape[2]!=w.shape[3]:
        raise DimensionError(f'{op}: square kernels only, got {w.shape}.')
    if w.shape[channel_axis]!=x.shape[0]:
        raise DimensionError(f'{op}: {x.shape[0]} input channels for kernel {w.shape}.')


def conv2d(x, w, stride:int=1, pad:int=0) -> Tensor:
    '''Cross-correlation of ``C_in x H x W`` with ``C_out x C_in x k x k``, zero padding.'''
    x, w = as_tensor(x), as_tensor(w)
    _check_kernel('conv2d', x, w, 1)
    k = w.shape[2]
    conv_extent(x.shape[1], k, stride, pad)
    conv_extent(x.shape[2], k, stride, pad)
    X, W = x.data, w.data
    out, win = _conv2d_data(X, W, stride, pad)

    def backward(g):
        dw = np.tensordot(g, win, axes=([1, 2], [1, 2]))
        dx = _conv2d_transpose_data(g, W, stride, pad)
        return dx, dw
    return record_op('conv2d', (x, w), out, backward)


def conv2d_transpose(x, w, stride:int=1, pad:int=0) -> Tensor:
    '''Linear adjoint of ``conv2d`` with the same kernel, stride and padding: `x` has
    ``w.shape[0]`` channels, the output ``w.shape[1]`` channels and extent
    ``(H-1)*stride + k - 2*pad``.'''
    x, w = as_tensor(x), as_tensor(w)
    _check_kernel('conv2d_transpose', x, w, 0)
    k = w.shape[2]
    if stride<=0 or pad<0: raise DimensionError('conv2d_transpose: invalid stride or padding.')
    for size in x.shape[1:]:
        if (size-1)*stride + k - 2*pad<=0:
            raise DimensionError(f'conv2d_transpose: empty output for extent {size}.')
    X, W = x.data, w.data
    out = _conv2d_transpose_data(X, W, stride, pad)

    def backward(g):
        dx, win = _conv2d_data(g, W, stride, pad)
        dw = np.tensordot(X, win, axes=([1, 2], [1, 2]))
        return dx, dw
    return record_op('conv2d_transpose', (x, w), out, backward)
