'''Encoder ablation: train one generator per arm and compare restored quality.'''

from dataclasses import (dataclass, replace)
from typing import (List, Sequence, Tuple)
import logging
import threading
import time
from queue import Queue
from prettytable import PrettyTable
from ..common.csvfile import (format_value, write_rows)
from ..common.exception import (ThinCloudException, UsageError)
from ..data.image import ImagePair
from ..evaluation.report import evaluate_pairs
from ..gan.loss import GanLossParams
from ..gan.trainer import (GanTrainer, TrainConfig)
from ..model.network import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig)


ABLATION_HEADER = ('arm', 'encoder', 'heads', 'psnr', 'ssim', 'baseline_psnr', 'baseline_ssim', 'seconds')
DEFAULT_ARMS = ('conv', '1', '2', '4')


def parse_arms(text:str, base:GeneratorConfig=None) -> List[Tuple[str, GeneratorConfig]]:
    '''``"conv,1,2,4"`` -> one generator config per arm: ``conv`` swaps attention blocks for
    conv blocks, an integer sets the head count.'''
    base = base or GeneratorConfig()
    res = []
    for arm in (a.strip() for a in text.split(',') if a.strip()):
        if arm=='conv':
            res.append((arm, replace(base, encoder='conv')))
        elif arm.isdigit() and int(arm)>0:
            res.append((arm, replace(base, encoder='attention', heads=int(arm))))
        else:
            raise UsageError(f'Invalid ablation arm "{arm}": expect "conv" or a head count.')
    if not res: raise UsageError('No ablation arm given.')
    for _, cfg in res: cfg.validate()
    return res


@dataclass
class ArmResult:
    arm: str
    encoder: str
    heads: int          # 0 for the conv encoder
    psnr: float = float('nan')
    ssim: float = float('nan')
    baseline_psnr: float = float('nan')
    baseline_ssim: float = float('nan')
    seconds: float = 0.0
    status: bool = False


class AblationRunner:
    '''Train all arms from a queue with worker threads; results keep arm order.'''

    def __init__(self, arms:Sequence[Tuple[str, GeneratorConfig]], train:Sequence[ImagePair],
                 test:Sequence[ImagePair], cfg:TrainConfig=None, loss:GanLossParams=None,
                 disc_cfg:DiscriminatorConfig=None, num_threads:int=1) -> None:
        '''Ablation over generator configs.

        Args:
            arms (list): ``(arm label, GeneratorConfig)`` pairs.
            train (list): Training pairs.
            test (list): Held-out pairs.
            cfg (TrainConfig, optional): Shared schedule, same seed for every arm.
            loss (GanLossParams, optional): Shared loss weights.
            disc_cfg (DiscriminatorConfig, optional): Shared discriminator architecture.
            num_threads (int, optional): Number of threads training arms. Defaults to 1.
        '''
        self.__train, self.__test = list(train), list(test)
        self.__cfg = cfg or TrainConfig()
        self.__loss = loss or GanLossParams()
        self.__disc_cfg = disc_cfg or DiscriminatorConfig()
        self.__num_threads = max(1, num_threads)

        self.__queue = Queue(maxsize=len(arms))
        for i, arm in enumerate(arms): self.__queue.put((i, arm))
        self.__results = [] # type: List[Tuple[int, ArmResult]]
        self.__lock = threading.Lock()
        self.__baseline = None


    @property
    def results(self) -> List[ArmResult]:
        return [r for _, r in sorted(self.__results, key=lambda x: x[0])]


    def run(self, show_info:bool=True) -> List[ArmResult]:
        '''Train and evaluate every arm.'''
        self.__baseline = evaluate_pairs(self.__test)
        for i in range(self.__num_threads):
            thread = threading.Thread(target=self.__run_arms, args=(show_info,),
                                      name=f'Runner_{i}', daemon=True)
            thread.start()
        self.__queue.join()
        if show_info: logging.info('\n%s', self.summary())
        return self.results


    def summary(self) -> PrettyTable:
        table = PrettyTable()
        table.field_names = ['Arm', 'Encoder', 'Heads', 'PSNR', 'SSIM', 'Baseline PSNR',
                             'Baseline SSIM', 'Time']
        for r in self.results:
            table.add_row([r.arm, r.encoder, r.heads or '-', round(r.psnr, 4), round(r.ssim, 4),
                           round(r.baseline_psnr, 4), round(r.baseline_ssim, 4), r.seconds])
        return table


    def to_csv(self, path:str, append:bool=False):
        rows = [[r.arm, r.encoder, r.heads] + [format_value(float(getattr(r, k))) for k in
                ('psnr', 'ssim', 'baseline_psnr', 'baseline_ssim')] + [r.seconds]
                for r in self.results]
        write_rows(path, ABLATION_HEADER, rows, append=append)


    def __run_arms(self, show_info:bool):
        while True:
            i, (arm, gen_cfg) = self.__queue.get()
            heads = gen_cfg.heads if gen_cfg.encoder=='attention' else 0
            result = ArmResult(arm, gen_cfg.encoder, heads,
                               baseline_psnr=self.__baseline.mean_psnr,
                               baseline_ssim=self.__baseline.mean_ssim)
            if show_info: logging.info('Start arm "%s"...', arm)
            start = time.perf_counter()
            try:
                gen = Generator(gen_cfg, seed=self.__cfg.seed)
                disc = Discriminator(self.__disc_cfg, seed=self.__cfg.seed+1)
                trainer = GanTrainer(gen, disc, self.__cfg, self.__loss, name=f'arm-{arm}')
                trainer.run(self.__train)
                report = evaluate_pairs(self.__test, gen)
                result.psnr, result.ssim = report.mean_psnr, report.mean_ssim
                result.status = True
            except ThinCloudException as e:
                logging.error('Arm "%s" failed: %s', arm, e)
            except Exception as e:
                logging.exception('Arm "%s" failed with unexpected error: %s', arm, e)
            finally:
                result.seconds = round(time.perf_counter()-start, 1)
                with self.__lock: self.__results.append((i, result))
                self.__queue.task_done()
            if show_info:
                logging.info('%s arm "%s": psnr %.4f dB, ssim %.4f in %.1f sec.',
                             'Finished' if result.status else 'Failed', arm,
                             result.psnr, result.ssim, result.seconds)
