'''
Central finite-difference verification of backward rules.

For a scalar function ``f`` and coordinate ``i``:

```
numeric_i = (f(x + h e_i) - f(x - h e_i)) / (2h)
rel_err_i = |numeric_i - analytic_i| / max(|numeric_i|, |analytic_i|, 1e-8)
```

Cases reduce their output to a scalar through a fixed random weighting ``sum(R * y)``, so every
output element contributes to the checked gradient.
'''

from dataclasses import dataclass
from typing import (Callable, List)
import logging
import numpy as np
from prettytable import PrettyTable
from ..common.exception import (NumericalError, UsageError)
from . import ops
from .tape import (Tape, bind)
from .tensor import (Param, Tensor)


DENOMINATOR_FLOOR = 1e-8
PRIMITIVE_TOLERANCE = 1e-6
COMPOSITE_TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    tolerance: float
    worst_index: str
    passed: bool


@dataclass
class GradCheckCase:
    '''Scalar function of some params, evaluated on a tape or (tape=None) as constants.'''
    name: str
    params: List[Param]
    evaluate: Callable
    tolerance: float = PRIMITIVE_TOLERANCE
    max_coords: int = None # sample at most this many coordinates per param


def _scalar(loss:Tensor, name:str) -> float:
    value = loss.item()
    if not np.isfinite(value): raise NumericalError(f'{name}: non-finite function value.')
    return value


def check_case(case:GradCheckCase, h:float=1e-5, rng:np.random.Generator=None) -> GradCheckResult:
    '''Compare backward gradients of `case` with central differences.'''
    if not h>0: raise UsageError(f'Step h must be positive, got {h}.')
    rng = rng or np.random.default_rng(0)

    # analytic
    for p in case.params: p.zero_grad()
    tape = Tape(case.name)
    loss = case.evaluate(tape)
    _scalar(loss, case.name)
    tape.backward(loss)
    analytic = {p.name: p.grad.copy() for p in case.params}

    worst, worst_index = 0.0, '-'
    for p in case.params:
        coords = np.arange(p.size)
        if case.max_coords and p.size>case.max_coords:
            coords = np.sort(rng.choice(p.size, size=case.max_coords, replace=False))
        base = p.value.copy()
        for i in coords:
            x = base.copy().reshape(-1)
            x[i] = base.reshape(-1)[i] + h
            p.value = x.reshape(base.shape)
            f_plus = _scalar(case.evaluate(None), case.name)
            x[i] = base.reshape(-1)[i] - h
            p.value = x.reshape(base.shape)
            f_minus = _scalar(case.evaluate(None), case.name)
            p.value = base

            numeric = (f_plus - f_minus) / (2.0*h)
            a = float(analytic[p.name].reshape(-1)[i])
            err = abs(numeric - a) / max(abs(numeric), abs(a), DENOMINATOR_FLOOR)
            if err>worst or worst_index=='-':
                worst = max(err, worst)
                idx = np.unravel_index(i, p.shape) if p.shape else ()
                worst_index = f'{p.name}{list(map(int, idx))}'
    for p in case.params: p.zero_grad()
    return GradCheckResult(case.name, worst, case.tolerance, worst_index, worst<=case.tolerance)


def finite_diff_check(f:Callable, x, h:float=1e-5) -> float:
    '''Max relative error between backward and central differences of scalar `f` at `x`.

    Args:
        f (Callable): ``Tensor -> scalar Tensor``.
        x (array_like): Point of evaluation; checked at its own precision (64-bit advised).
        h (float, optional): Step. Defaults to 1e-5.
    '''
    data = x.data if isinstance(x, Tensor) else x
    param = Param('x', data, dtype=np.asarray(data).dtype if np.asarray(data).dtype.kind=='f' else np.float64)
    case = GradCheckCase('f', [param], lambda tape: f(bind(param, tape)))
    return check_case(case, h).max_rel_err


def weighted_sum(y:Tensor, weights:np.ndarray) -> Tensor:
    '''``sum(weights * y)``, the scalar reduction used by the cases.'''
    return ops.sum_all(ops.mul(y, Tensor(weights, dtype=y.dtype)))


class GradCheckSuite:
    '''Collection of cases run together and summarized in a table.'''

    def __init__(self, h:float=1e-5, seed:int=0) -> None:
        self.h = h
        self.seed = seed
        self.__cases = []    # type: List[GradCheckCase]
        self.__results = []  # type: List[GradCheckResult]

    @property
    def cases(self) -> List[GradCheckCase]:
        return self.__cases

    @property
    def results(self) -> List[GradCheckResult]:
        return self.__results

    @property
    def passed(self) -> bool:
        return bool(self.__results) and all(r.passed for r in self.__results)

    def add(self, case:GradCheckCase):
        self.__cases.append(case)

    def run(self, show_info:bool=True) -> List[GradCheckResult]:
        '''Check all cases in registration order.'''
        rng = np.random.default_rng(self.seed)
        self.__results = []
        for case in self.__cases:
            res = check_case(case, self.h, rng)
            self.__results.append(res)
            if show_info:
                logging.info('%s %s: max rel err %.3e (tol %.0e)', 'PASS' if res.passed else 'FAIL',
                             res.name, res.max_rel_err, res.tolerance)
        return self.__results

    def failures(self) -> List[GradCheckResult]:
        return [r for r in self.__results if not r.passed]

    def summary(self) -> PrettyTable:
        table = PrettyTable()
        table.field_names = ['op', 'max_rel_err', 'tolerance', 'worst_index', 'passed']
        for r in self.__results:
            table.add_row([r.name, f'{r.max_rel_err:.3e}', f'{r.tolerance:.0e}', r.worst_index, r.passed])
        return table


def _param(name:str, value) -> Param:
    return Param(name, value, dtype=np.float64)


def _add_pointwise_cases(suite:GradCheckSuite, rng:np.random.Generator):
    '''Unary and binary elementwise functions, inputs kept away from kinks and clamps.'''
    away = lambda shape: away_from_zero(rng, shape, 0.2, 1.0)
    unary = [
        ('relu', away((3, 4)), {}),
        ('leaky_relu', away((3, 4)), {'alpha': 0.2}),
        ('sigmoid', rng.normal(size=(3, 4)), {}),
        ('tanh', rng.normal(size=(3, 4)), {}),
        ('log_clamped', rng.uniform(0.1, 0.9, (3, 4)), {'eps': 1e-7}),
        ('abs', away((3, 4)), {}),
        ('scale', rng.normal(size=(3, 4)), {'c': -1.7}),
        ('add_scalar', rng.normal(size=(3, 4)), {'c': 0.3}),
        ('clamp_min', away((3, 4)), {'floor': 0.0}),
    ]
    for f, value, kwargs in unary:
        x, R = _param('x', value), rng.normal(size=value.shape)
        suite.add(GradCheckCase(f, [x], lambda tape, x=x, R=R, f=f, kw=kwargs:
                                weighted_sum(ops.pointwise(bind(x, tape), f, **kw), R)))

    for f in ops.Pointwise.BINARY:
        a, b = _param('a', rng.normal(size=(3, 4))), _param('b', rng.uniform(0.5, 1.5, (3, 4)))
        R = rng.normal(size=(3, 4))
        suite.add(GradCheckCase(f, [a, b], lambda tape, a=a, b=b, R=R, f=f:
                                weighted_sum(ops.pointwise(bind(a, tape), f, bind(b, tape)), R)))


def _add_primitive_cases(suite:GradCheckSuite, rng:np.random.Generator):
    def case(name, shapes, fun, out_shape, **kw):
        params = [_param(f'{name}.{i}', v if isinstance(v, np.ndarray) else rng.normal(size=v))
                  for i, v in enumerate(shapes)]
        R = rng.normal(size=out_shape)
        suite.add(GradCheckCase(name, params, lambda tape:
                  weighted_sum(fun(*[bind(p, tape) for p in params]), R), **kw))

    case('matmul', [(3, 4), (4, 2)], ops.matmul, (3, 2))
    case('transpose', [(3, 4)], ops.transpose, (4, 3))
    case('reshape', [(3, 4)], lambda x: ops.reshape(x, (2, 6)), (2, 6))
    case('slice_axis', [(4, 5)], lambda x: ops.slice_axis(x, 1, 4, axis=1), (4, 3))
    case('concat', [(2, 3), (4, 3)], lambda a, b: ops.concat([a, b], axis=0), (6, 3))
    case('split', [(3, 6)], lambda x: ops.concat(ops.split(x, 3, axis=1)[::-1], axis=1), (3, 6))
    case('softmax_rows', [(3, 5)], ops.softmax_rows, (3, 5))
    case('l2_normalize_rows', [(4, 3)], ops.l2_normalize_rows, (4, 3))
    case('reduce_sum', [(3, 4, 2)], lambda x: ops.reduce(x, 'sum', axes=(0, 2)), (4,))
    case('reduce_mean', [(3, 4, 2)], lambda x: ops.reduce(x, 'mean', axes=1, keepdims=True), (3, 1, 2))
    case('bias_add', [(3, 4, 4), (3,)], ops.bias_add, (3, 4, 4))
    case('conv2d', [(2, 6, 6), (3, 2, 3, 3)], lambda x, w: ops.conv2d(x, w, 1, 1), (3, 6, 6))
    case('conv2d_strided', [(2, 6, 6), (3, 2, 4, 4)], lambda x, w: ops.conv2d(x, w, 2, 1), (3, 3, 3))
    case('conv2d_transpose', [(3, 3, 3), (3, 2, 4, 4)],
         lambda x, w: ops.conv2d_transpose(x, w, 2, 1), (2, 6, 6))


def _add_attention_cases(suite:GradCheckSuite, rng:np.random.Generator):
    from ..model.attention import (AttentionConfig, AttentionWeights, attention_block,
                                   kernel_attention, linear_attention,
                                   multi_head_linear_attention, softmax_attention)
    N, D = 5, 3
    for name, fun in (('softmax_attention', softmax_attention),
                      ('linear_attention', linear_attention),
                      ('kernel_attention', lambda q, k, v: kernel_attention(ops.absolute(q),
                                                                            ops.absolute(k), v))):
        q, k, v = (_param(f'{name}.{s}', rng.normal(size=(N, D))) for s in 'qkv')
        R = rng.normal(size=(N, D))
        suite.add(GradCheckCase(name, [q, k, v], lambda tape, q=q, k=k, v=v, R=R, fun=fun:
                  weighted_sum(fun(bind(q, tape), bind(k, tape), bind(v, tape)), R),
                  tolerance=COMPOSITE_TOLERANCE))

    cfg = AttentionConfig(heads=2, model_dim=4, head_key_dim=3, head_value_dim=2)
    w = AttentionWeights.init(cfg, rng, 'mhla', np.float64)
    x = _param('mhla.x', rng.normal(size=(6, 4)))
    R = rng.normal(size=(6, 4))
    suite.add(GradCheckCase('multi_head_linear_attention', [x] + w.params, lambda tape:
              weighted_sum(multi_head_linear_attention(bind(x, tape), w, cfg, tape), R),
              tolerance=COMPOSITE_TOLERANCE))

    cfg_b = AttentionConfig.for_width(4, heads=2)
    w_b = AttentionWeights.init(cfg_b, rng, 'block', np.float64)
    fmap = _param('block.x', rng.normal(size=(4, 3, 3)))
    R_b = rng.normal(size=(4, 3, 3))
    suite.add(GradCheckCase('attention_block', [fmap] + w_b.params, lambda tape:
              weighted_sum(attention_block(bind(fmap, tape), w_b, cfg_b, tape), R_b),
              tolerance=COMPOSITE_TOLERANCE))


def _add_network_cases(suite:GradCheckSuite, rng:np.random.Generator, max_coords:int):
    from ..gan.loss import (GanLossParams, d_loss, g_adv_loss, l1_loss)
    from ..model.network import (Discriminator, Generator, GeneratorConfig)

    cfg = GeneratorConfig(base_channels=4, levels=2, heads=2, side=8)
    gen = Generator(cfg, seed=int(rng.integers(2**31)), dtype=np.float64)
    for p in gen.params:
        if p.name.endswith('.b'): p.value = rng.normal(0.0, 0.1, p.shape)
    image = Tensor(rng.uniform(0.1, 0.9, (3, 8, 8)), dtype=np.float64)
    R = rng.normal(size=(3, 8, 8))
    suite.add(GradCheckCase('generator', gen.params, lambda tape:
              weighted_sum(gen.forward(image, tape), R),
              tolerance=COMPOSITE_TOLERANCE, max_coords=max_coords))

    disc = Discriminator(seed=int(rng.integers(2**31)), dtype=np.float64)
    target = Tensor(rng.uniform(0.1, 0.9, (3, 8, 8)), dtype=np.float64)
    y = _param('disc.y', rng.uniform(0.1, 0.9, (3, 8, 8)))
    suite.add(GradCheckCase('discriminator', [y] + disc.params, lambda tape:
              ops.add(d_loss(disc.forward(image, target, tape), disc.forward(image, bind(y, tape), tape)),
                      g_adv_loss(disc.forward(image, bind(y, tape), tape))),
              tolerance=COMPOSITE_TOLERANCE, max_coords=max_coords))

    gt = Tensor(rng.uniform(0.0, 1.0, (3, 4, 4)), dtype=np.float64)
    gen_img = _param('l1.gen', gt.numpy() + away_from_zero(rng, (3, 4, 4)))
    suite.add(GradCheckCase('l1_loss', [gen_img], lambda tape:
              l1_loss(gt, bind(gen_img, tape), (1.0, 2.0, 0.5))))

    probs = _param('bce.p', rng.uniform(0.1, 0.9, (2, 2)))
    params = GanLossParams(saturating=True)
    suite.add(GradCheckCase('g_adv_saturating', [probs], lambda tape:
              g_adv_loss(bind(probs, tape), params)))


def away_from_zero(rng:np.random.Generator, shape:tuple, low:float=0.05, high:float=0.3) -> np.ndarray:
    '''Random values with magnitude in ``[low, high]`` and random sign.'''
    return rng.uniform(low, high, shape) * rng.choice([-1.0, 1.0], shape)


def default_suite(seed:int=0, max_coords:int=6, networks:bool=True) -> GradCheckSuite:
    '''All primitives at 64-bit, attention composites and optionally the small networks.

    Args:
        seed (int, optional): Seed of inputs, weights and sampled coordinates. Defaults to 0.
        max_coords (int, optional): Coordinates sampled per network param. Defaults to 6.
        networks (bool, optional): Include generator, discriminator and losses. Defaults to True.
    '''
    rng = np.random.default_rng(seed)
    suite = GradCheckSuite(seed=seed)
    _add_pointwise_cases(suite, rng)
    _add_primitive_cases(suite, rng)
    _add_attention_cases(suite, rng)
    if networks: _add_network_cases(suite, rng, max_coords)
    return suite
