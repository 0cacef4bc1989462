'''Scaling benchmark of softmax and linear attention.'''

from dataclasses import dataclass
from typing import (Dict, List, Sequence, Tuple)
import logging
import os
import time
import numpy as np
from prettytable import PrettyTable
from ..autodiff.monitor import OpMonitor
from ..autodiff.tensor import Tensor
from ..common.csvfile import write_rows
from ..common.exception import (ConfigError, UsageError)
from ..model.attention import (linear_attention, softmax_attention)


KERNELS = {'softmax': softmax_attention, 'linear': linear_attention}
BENCH_HEADER = ('kernel', 'N', 'D', 'wall_time_ns', 'peak_transient_elements', 'reps')
MIN_REPS = 5


@dataclass(frozen=True)
class BenchConfig:
    '''Sequence lengths, head width and repetitions.'''
    sizes: Tuple[int, ...] = (256, 1024, 4096)
    dim: int = 32
    reps: int = 7
    kernels: Tuple[str, ...] = ('softmax', 'linear')
    seed: int = 0

    def validate(self):
        if not self.sizes or any(n<=0 for n in self.sizes):
            raise ConfigError(f'Sizes must be positive, got {self.sizes}.')
        if any(a>=b for a, b in zip(self.sizes, self.sizes[1:])):
            raise UsageError(f'Sizes must be strictly ascending, got {list(self.sizes)}.')
        if self.dim<=0: raise ConfigError(f'Dimension must be positive, got {self.dim}.')
        if self.reps<MIN_REPS: raise ConfigError(f'At least {MIN_REPS} repetitions, got {self.reps}.')
        for k in self.kernels:
            if k not in KERNELS: raise ConfigError(f'Invalid kernel {k}, expect one of {list(KERNELS)}.')


@dataclass
class BenchRecord:
    kernel: str
    N: int
    D: int
    wall_time_ns: int                # median over reps, warmup excluded
    peak_transient_elements: int     # largest single buffer produced by a primitive
    reps: int


class BenchMark:
    '''Time and instrument attention kernels over increasing sequence lengths. Runs in the
    calling thread; pin BLAS to one thread (``OMP_NUM_THREADS=1``) for stable timings.'''

    def __init__(self, cfg:BenchConfig=None) -> None:
        self.cfg = cfg or BenchConfig()
        self.cfg.validate()
        self.__records = [] # type: List[BenchRecord]

    @property
    def records(self) -> List[BenchRecord]:
        return self.__records


    def measure(self, kernel:str, n:int) -> BenchRecord:
        '''Median wall time of `reps` calls after one warmup call, and the peak buffer size.'''
        fun, D = KERNELS[kernel], self.cfg.dim
        rng = np.random.default_rng((self.cfg.seed, n))
        q, k, v = (Tensor(rng.normal(size=(n, D)).astype(np.float32)) for _ in range(3))

        with OpMonitor() as monitor:
            fun(q, k, v) # warmup
        times = []
        for _ in range(self.cfg.reps):
            start = time.perf_counter_ns()
            fun(q, k, v)
            times.append(time.perf_counter_ns() - start)
        return BenchRecord(kernel, n, D, int(np.median(times)), monitor.peak_elements, self.cfg.reps)


    def run(self, show_info:bool=True) -> List[BenchRecord]:
        '''Measure every kernel at every size.'''
        if show_info and os.environ.get('OMP_NUM_THREADS')!='1':
            logging.warning('OMP_NUM_THREADS is not 1: timings include BLAS threading.')
        self.__records = []
        for kernel in self.cfg.kernels:
            for n in self.cfg.sizes:
                record = self.measure(kernel, n)
                self.__records.append(record)
                if show_info:
                    logging.info('%s N=%d: %.3f ms, peak %d elements.', kernel, n,
                                 record.wall_time_ns/1e6, record.peak_transient_elements)
        if show_info: logging.info('\n%s', self.summary())
        return self.__records


    def ratios(self, kernel:str) -> Dict[Tuple[int, int], float]:
        '''Time ratios between consecutive sizes: (N1, N2) -> t(N2)/t(N1).'''
        recs = [r for r in self.__records if r.kernel==kernel]
        return {(a.N, b.N): b.wall_time_ns / max(a.wall_time_ns, 1) for a, b in zip(recs, recs[1:])}


    def summary_list(self) -> list:
        res = []
        for r in self.__records:
            budget = r.N*r.D + r.D*r.D
            res.append([r.kernel, r.N, r.D, round(r.wall_time_ns/1e6, 3), r.peak_transient_elements,
                        round(r.peak_transient_elements/(r.N*r.N), 3),
                        round(r.peak_transient_elements/budget, 3)])
        return res


    def summary(self) -> PrettyTable:
        '''Benchmark result in tabular format.'''
        table = PrettyTable()
        table.field_names = ['Kernel', 'N', 'D', 'Time (ms)', 'Peak elements', 'Peak / N^2',
                             'Peak / (ND+D^2)']
        for line in self.summary_list(): table.add_row(line)
        return table


    def to_csv(self, path:str, append:bool=False):
        rows = [[r.kernel, r.N, r.D, r.wall_time_ns, r.peak_transient_elements, r.reps]
                for r in self.__records]
        write_rows(path, BENCH_HEADER, rows, append=append)


def run_bench(sizes:Sequence[int]=(256, 1024, 4096), dim:int=32, reps:int=7,
              out:str=None) -> List[BenchRecord]:
    '''Run the benchmark and optionally write its CSV.'''
    bench = BenchMark(BenchConfig(tuple(sizes), dim, reps))
    records = bench.run()
    if out: bench.to_csv(out)
    return records
