'''Adaptive-moment (Adam) optimizer.'''

from typing import (Dict, List, Sequence)
import numpy as np
from ..autodiff.tensor import Param
from ..common.exception import (CheckpointError, ConfigError)


class Adam:
    '''Adam with bias correction, state kept per param name.'''

    def __init__(self, params:Sequence[Param], lr:float=2e-4, betas:tuple=(0.9, 0.999),
                 eps:float=1e-8, name:str='adam') -> None:
        '''Optimizer over `params`.

        Args:
            params (Sequence[Param]): Params updated in place by ``step``.
            lr (float, optional): Step size. Defaults to 2e-4.
            betas (tuple, optional): Decay of first and second moments. Defaults to (0.9, 0.999).
            eps (float, optional): Denominator guard. Defaults to 1e-8.
            name (str, optional): Prefix of state names in checkpoints.
        '''
        if not lr>0: raise ConfigError(f'Step size must be positive, got {lr}.')
        if len(betas)!=2 or not all(0.0<=b<1.0 for b in betas):
            raise ConfigError(f'Moment decays must be in [0, 1), got {betas}.')
        self.name = name
        self.lr, self.betas, self.eps = lr, tuple(betas), eps
        self.__params = list(params) # type: List[Param]
        self.__m = {p.name: np.zeros_like(p.value) for p in self.__params}
        self.__v = {p.name: np.zeros_like(p.value) for p in self.__params}
        self.__t = 0

    @property
    def params(self) -> List[Param]:
        return self.__params

    @property
    def t(self) -> int:
        '''Number of updates done.'''
        return self.__t

    def zero_grad(self):
        for p in self.__params: p.zero_grad()

    def step(self):
        '''Update every param from its accumulated gradient.'''
        b1, b2 = self.betas
        self.__t += 1
        c1, c2 = 1.0 - b1**self.__t, 1.0 - b2**self.__t
        for p in self.__params:
            g = p.grad
            m = self.__m[p.name] = b1 * self.__m[p.name] + (1.0-b1) * g
            v = self.__v[p.name] = b2 * self.__v[p.name] + (1.0-b2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


    def state_dict(self) -> Dict[str, np.ndarray]:
        '''Moments and counter as named arrays.'''
        res = {f'{self.name}.t': np.array([self.__t], dtype=np.float64)}
        for p in self.__params:
            res[f'{self.name}.m.{p.name}'] = self.__m[p.name].copy()
            res[f'{self.name}.v.{p.name}'] = self.__v[p.name].copy()
        return res


    def load_state_dict(self, state:Dict[str, np.ndarray]):
        '''Restore the output of ``state_dict``.'''
        key = f'{self.name}.t'
        if key not in state: raise CheckpointError(f'Optimizer state {key} not found.')
        t = int(np.asarray(state[key]).reshape(-1)[0])
        m, v = {}, {}
        for p in self.__params:
            for store, kind in ((m, 'm'), (v, 'v')):
                k = f'{self.name}.{kind}.{p.name}'
                if k not in state: raise CheckpointError(f'Optimizer state {k} not found.')
                value = np.asarray(state[k])
                if value.shape!=p.shape:
                    raise CheckpointError(f'Shape mismatch for {k}: {value.shape} != {p.shape}.')
                store[p.name] = value.astype(p.dtype, copy=True)
        self.__t, self.__m, self.__v = t, m, v
