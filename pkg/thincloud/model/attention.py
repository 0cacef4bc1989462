'''
Attention kernels.

* ``softmax_attention``: reference ``softmax(Q K^T) V``, materializes the ``N x N`` weights.
* ``kernel_attention``: generic factorized form for features ``phi(Q)``, ``psi(K)``:

```
           phi_i . (sum_j psi_j v_j^T)
out_i = ---------------------------------
         max(phi_i . (sum_j psi_j), eps)
```

* ``linear_attention``: Taylor similarity ``1 + q_i^ . k_j^`` with row-normalized ``q^``, ``k^``,
  i.e. ``kernel_attention`` on ``taylor_features(X) = [1 | l2_normalize_rows(X)]``. Both sums are
  computed once, so cost and memory are linear in ``N``.

No ``1/sqrt(D_k)`` scaling in either form.
'''

from dataclasses import dataclass
from typing import (List, Tuple)
import numpy as np
from ..autodiff import ops
from ..autodiff.tape import (Tape, bind)
from ..autodiff.tensor import (DEFAULT_DTYPE, Param, Tensor, default_eps)
from ..common.exception import (ConfigError, DimensionError, NumericalError, UsageError)


@dataclass(frozen=True)
class AttentionConfig:
    '''Multi-head attention dimensions. Input width ``D_x`` equals ``model_dim``.'''
    heads: int = 4
    model_dim: int = 16
    head_key_dim: int = 4
    head_value_dim: int = 4
    eps: float = 1e-6

    @classmethod
    def for_width(cls, model_dim:int, heads:int=4, eps:float=1e-6) -> "AttentionConfig":
        '''Split `model_dim` evenly over heads, at least one channel per head.'''
        d = max(model_dim // heads, 1) if heads>0 else 0
        return cls(heads=heads, model_dim=model_dim, head_key_dim=d, head_value_dim=d, eps=eps)

    @property
    def concat_dim(self) -> int:
        '''Width of the concatenated heads fed to the output projection.'''
        return self.heads * self.head_value_dim

    def validate(self):
        for name in ('heads', 'model_dim', 'head_key_dim', 'head_value_dim'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value<=0:
                raise ConfigError(f'AttentionConfig.{name} must be a positive int, got {value}.')
        if not self.eps>0:
            raise ConfigError(f'AttentionConfig.eps must be positive, got {self.eps}.')


class AttentionWeights:
    '''Per-head projections ``W_q, W_k: D_x x D_k``, ``W_v: D_x x D_v`` and the shared output
    projection ``W_o: (h*D_v) x C``.'''

    def __init__(self, wq:List[Param], wk:List[Param], wv:List[Param], wo:Param) -> None:
        if not len(wq)==len(wk)==len(wv):
            raise DimensionError('Inconsistent number of heads in projections.')
        self.wq, self.wk, self.wv, self.wo = list(wq), list(wk), list(wv), wo

    @classmethod
    def init(cls, cfg:AttentionConfig, rng:np.random.Generator, prefix:str='attn',
             dtype=DEFAULT_DTYPE) -> "AttentionWeights":
        '''He-normal initialization: zero mean, variance ``2/fan_in``.

        Args:
            cfg (AttentionConfig): Dimensions.
            rng (np.random.Generator): Random source, consumed in a fixed order.
            prefix (str, optional): Parameter name prefix. Defaults to 'attn'.
            dtype (optional): Parameter precision.
        '''
        cfg.validate()
        C = cfg.model_dim
        def normal(name, rows, cols):
            value = rng.normal(0.0, np.sqrt(2.0/rows), size=(rows, cols))
            return Param(f'{prefix}.{name}', value, dtype=dtype)

        wq, wk, wv = [], [], []
        for i in range(cfg.heads):
            wq.append(normal(f'h{i}.wq', C, cfg.head_key_dim))
            wk.append(normal(f'h{i}.wk', C, cfg.head_key_dim))
            wv.append(normal(f'h{i}.wv', C, cfg.head_value_dim))
        wo = normal('wo', cfg.concat_dim, C)
        return cls(wq, wk, wv, wo)

    @property
    def heads(self) -> int:
        return len(self.wq)

    @property
    def params(self) -> List[Param]:
        '''All parameters, head by head, output projection last.'''
        res = []
        for q, k, v in zip(self.wq, self.wk, self.wv): res.extend((q, k, v))
        res.append(self.wo)
        return res

    def check(self, cfg:AttentionConfig):
        '''Raise ``DimensionError`` if shapes disagree with `cfg`.'''
        C = cfg.model_dim
        if self.heads!=cfg.heads:
            raise DimensionError(f'{self.heads} heads in weights, {cfg.heads} in config.')
        expected = [(C, cfg.head_key_dim), (C, cfg.head_key_dim), (C, cfg.head_value_dim)]
        for i in range(self.heads):
            for p, shape in zip((self.wq[i], self.wk[i], self.wv[i]), expected):
                if p.shape!=shape:
                    raise DimensionError(f'{p.name}: shape {p.shape}, expect {shape}.')
        if self.wo.shape!=(cfg.concat_dim, C):
            raise DimensionError(f'{self.wo.name}: shape {self.wo.shape}, expect {(cfg.concat_dim, C)}.')


def project_qkv(X, w:AttentionWeights, head:int, tape:Tape=None) -> Tuple[Tensor, Tensor, Tensor]:
    '''``Q = X W_q``, ``K = X W_k``, ``V = X W_v`` of one head.'''
    if not 0<=head<w.heads:
        raise UsageError(f'Head {head} out of range [0, {w.heads}).')
    return (ops.matmul(X, bind(w.wq[head], tape)),
            ops.matmul(X, bind(w.wk[head], tape)),
            ops.matmul(X, bind(w.wv[head], tape)))


def _check_qkv(Q:Tensor, K:Tensor, V:Tensor):
    for t in (Q, K, V):
        if t.ndim!=2: raise DimensionError(f'Expect 2-d Q, K, V, got shape {t.shape}.')
    if Q.shape[1]!=K.shape[1]:
        raise DimensionError(f'Query width {Q.shape[1]} != key width {K.shape[1]}.')
    if K.shape[0]!=V.shape[0]:
        raise DimensionError(f'{K.shape[0]} keys for {V.shape[0]} values.')


def softmax_attention_weights(Q, K) -> Tensor:
    '''Row-stochastic ``N x N`` matrix ``softmax_rows(Q K^T)``.'''
    Q, K = ops.as_tensor(Q), ops.as_tensor(K)
    return ops.softmax_rows(ops.matmul(Q, ops.transpose(K)))


def softmax_attention(Q, K, V) -> Tensor:
    '''Quadratic reference attention.'''
    Q, K, V = ops.as_tensor(Q), ops.as_tensor(K), ops.as_tensor(V)
    _check_qkv(Q, K, V)
    return ops.matmul(softmax_attention_weights(Q, K), V)


def kernel_attention(phi_q, psi_k, V, eps:float=1e-6) -> Tensor:
    '''Factorized attention for nonnegative-similarity features; denominators below `eps`
    are clamped and reported to active ``OpMonitor`` instances.'''
    phi_q, psi_k, V = ops.as_tensor(phi_q), ops.as_tensor(psi_k), ops.as_tensor(V)
    _check_qkv(phi_q, psi_k, V)
    kv = ops.matmul(ops.transpose(psi_k), V)                   # D_f x D_v
    k_sum = ops.reduce(psi_k, 'sum', axes=0, keepdims=True)    # 1 x D_f
    num = ops.matmul(phi_q, kv)                                # N x D_v
    den = ops.clamp_min(ops.matmul(phi_q, ops.transpose(k_sum)), eps) # N x 1
    ones = Tensor(np.ones((1, V.shape[1])), dtype=den.dtype)
    return ops.div(num, ops.matmul(den, ones))


def taylor_features(X, eps:float=None) -> Tensor:
    '''``[1 | l2_normalize_rows(X)]``, so that ``phi(q) . phi(k) = 1 + q^ . k^``.'''
    X = ops.as_tensor(X)
    ones = Tensor(np.ones((X.shape[0], 1)), dtype=X.dtype)
    return ops.concat([ones, ops.l2_normalize_rows(X, eps)], axis=1)


def linear_attention(Q, K, V, eps:float=1e-6) -> Tensor:
    '''O(N) attention with similarity ``1 + q^ . k^``.'''
    Q, K, V = ops.as_tensor(Q), ops.as_tensor(K), ops.as_tensor(V)
    _check_qkv(Q, K, V)
    return kernel_attention(taylor_features(Q), taylor_features(K), V, eps)


def brute_force_linear_attention(Q, K, V, eps:float=None, floor:float=1e-6) -> Tensor:
    '''Double loop over the row form of ``linear_attention``, only for verification. Row
    denominators are held at `floor` or above, as in ``kernel_attention``.'''
    Q, K, V = (np.asarray(ops.as_tensor(t).data, dtype=np.float64) for t in (Q, K, V))
    eps = default_eps(np.float64) if eps is None else eps
    N, M = Q.shape[0], K.shape[0]
    q_hat = [Q[i] / max(np.sqrt(sum(x*x for x in Q[i])), eps) for i in range(N)]
    k_hat = [K[j] / max(np.sqrt(sum(x*x for x in K[j])), eps) for j in range(M)]
    out = np.zeros((N, V.shape[1]))
    for i in range(N):
        total = 0.0
        for j in range(M):
            sim = 1.0 + sum(a*b for a, b in zip(q_hat[i], k_hat[j]))
            out[i] += sim * V[j]
            total += sim
        out[i] /= max(total, floor)
    if not np.all(np.isfinite(out)):
        raise NumericalError('brute force linear attention produced non-finite values.')
    return Tensor(out)


def multi_head_linear_attention(X, w:AttentionWeights, cfg:AttentionConfig,
                                tape:Tape=None) -> Tensor:
    '''Per head project and attend, concatenate heads, apply ``W_o``.

    Args:
        X (Tensor): ``N x C`` input rows.
        w (AttentionWeights): Weights consistent with `cfg`.
        cfg (AttentionConfig): Dimensions and denominator guard.
        tape (Tape, optional): Record params as leaves on this tape. Defaults to None.
    '''
    X = ops.as_tensor(X)
    w.check(cfg)
    if X.ndim!=2 or X.shape[1]!=cfg.model_dim:
        raise DimensionError(f'Expect N x {cfg.model_dim} input, got shape {X.shape}.')
    heads = [linear_attention(*project_qkv(X, w, i, tape), eps=cfg.eps) for i in range(cfg.heads)]
    return ops.matmul(ops.concat(heads, axis=1), bind(w.wo, tape))


def attention_block(feature_map, w:AttentionWeights, cfg:AttentionConfig,
                    tape:Tape=None) -> Tensor:
    '''Residual attention over spatial positions of a ``C x H x W`` map; positions are
    flattened row-major (W fastest).'''
    x = ops.as_tensor(feature_map)
    if x.ndim!=3:
        raise DimensionError(f'Expect C x H x W feature map, got shape {x.shape}.')
    C, H, W = x.shape
    rows = ops.transpose(ops.reshape(x, (C, H*W)))             # N x C
    y = multi_head_linear_attention(rows, w, cfg, tape)
    return ops.add(x, ops.reshape(ops.transpose(y), (C, H, W)))
