'''
Alternating adversarial training.

One step: ``d_steps`` discriminator updates on ``d_loss``, then one generator update on
``g_adv_loss + l1_loss``. Batches are drawn from seeded per-epoch permutations indexed by the
global sample counter, so a run resumed from a checkpoint at step ``t`` sees exactly the batches
an uninterrupted run would.
'''

from dataclasses import (asdict, dataclass)
from typing import (Callable, Dict, List, Sequence, Tuple)
import logging
import os
import time
import numpy as np
from ..autodiff import ops
from ..autodiff.tape import Tape
from ..common.csvfile import (format_value, write_rows)
from ..common.exception import (ConfigError, DataError, NumericalError)
from ..data.image import ImagePair
from ..evaluation.report import evaluate_pairs
from ..model.checkpoint import (Checkpoint, save_checkpoint)
from ..model.network import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig)
from .loss import (GanLossParams, d_loss, g_adv_loss, l1_loss, minimax_value)
from .optimizer import Adam


METRICS_HEADER = ('step', 'd_loss', 'g_adv', 'l1', 'value', 'psnr_eval', 'ssim_eval')


@dataclass(frozen=True)
class TrainConfig:
    '''Optimization schedule.'''
    steps: int = 2000
    batch_size: int = 4
    lr: float = 2e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = 7
    d_steps: int = 1
    log_interval: int = 10
    eval_interval: int = 200
    freeze_discriminator: bool = False

    def validate(self):
        if not isinstance(self.steps, (int, np.integer)) or self.steps<0:
            raise ConfigError(f'steps must be a nonnegative int, got {self.steps}.')
        for name in ('batch_size', 'd_steps', 'log_interval', 'eval_interval'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value<=0:
                raise ConfigError(f'TrainConfig.{name} must be a positive int, got {value}.')
        if not self.lr>0:
            raise ConfigError(f'Step size must be positive, got {self.lr}.')
        if len(self.betas)!=2 or not all(0.0<b<1.0 for b in self.betas):
            raise ConfigError(f'Moment decays must be in (0, 1), got {self.betas}.')


@dataclass
class StepMetrics:
    d_loss: float
    g_adv: float
    l1: float
    value: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _batch_mean(losses:list):
    total = losses[0]
    for loss in losses[1:]: total = ops.add(total, loss)
    return total * (1.0/len(losses))


def _finite(name:str, value:float) -> float:
    if not np.isfinite(value):
        raise NumericalError(f'Non-finite {name}: {value}.')
    return value


def train_step(gen:Generator, disc:Discriminator, batch:Sequence[ImagePair],
               cfg:TrainConfig, opt_g:Adam, opt_d:Adam, loss:GanLossParams=None) -> StepMetrics:
    '''One discriminator phase and one generator update on `batch`.

    Returns:
        StepMetrics: ``d_loss`` and ``value`` of the last discriminator pass before its update,
            ``g_adv`` and ``l1`` of the generator pass before its update; batch means.
    '''
    loss = loss or GanLossParams()
    if not batch: raise DataError('Empty batch.')

    # discriminator, on generated images held constant
    fakes = [gen.forward(p.cloudy) for p in batch]
    for _ in range(1 if cfg.freeze_discriminator else cfg.d_steps):
        tape = None if cfg.freeze_discriminator else Tape('D')
        d_losses, values = [], []
        for p, fake in zip(batch, fakes):
            d_real = disc.forward(p.cloudy, p.clear, tape)
            d_fake = disc.forward(p.cloudy, fake, tape)
            d_losses.append(d_loss(d_real, d_fake, loss))
            values.append(minimax_value(d_real, d_fake, loss.eps))
        d_total = _batch_mean(d_losses)
        value = _batch_mean(values).item()
        if tape is not None:
            opt_d.zero_grad()
            tape.backward(d_total)
            opt_d.step()

    # generator, through the discriminator with its params held constant
    tape = Tape('G')
    adv, rec = [], []
    for p in batch:
        fake = gen.forward(p.cloudy, tape)
        adv.append(g_adv_loss(disc.forward(p.cloudy, fake), loss))
        rec.append(l1_loss(p.clear, fake, loss.lambda_c))
    adv_total, rec_total = _batch_mean(adv), _batch_mean(rec)
    opt_g.zero_grad()
    tape.backward(ops.add(adv_total, rec_total))
    opt_g.step()

    return StepMetrics(_finite('d_loss', d_total.item()), _finite('g_adv', adv_total.item()),
                       _finite('l1', rec_total.item()), _finite('value', value))


class GanTrainer:
    '''Train a generator and a discriminator, log metrics and keep a history.'''

    def __init__(self, generator:Generator, discriminator:Discriminator, cfg:TrainConfig=None,
                 loss:GanLossParams=None, name:str=None) -> None:
        '''Adversarial trainer.

        Args:
            generator (Generator): Restoration model.
            discriminator (Discriminator): Conditional patch discriminator.
            cfg (TrainConfig, optional): Schedule. Defaults to ``TrainConfig()``.
            loss (GanLossParams, optional): Loss weights. Defaults to ``GanLossParams()``.
            name (str, optional): Trainer name. Defaults to class name.
        '''
        self.name = name or self.__class__.__name__
        self.__cfg = cfg or TrainConfig()
        self.__loss = loss or GanLossParams()
        self.__cfg.validate()
        self.__loss.validate()

        self.__gen = generator
        self.__disc = discriminator
        self.__opt_g = Adam(generator.params, self.__cfg.lr, self.__cfg.betas, name='adam.G')
        self.__opt_d = Adam(discriminator.params, self.__cfg.lr, self.__cfg.betas, name='adam.D')

        self.__step = 0
        self.__history = []     # type: List[dict]
        self.__status = False
        self.__user_time = 0.0
        self.__order = (None, None) # (epoch, n), sample order of the current epoch


    @property
    def generator(self) -> Generator:
        return self.__gen

    @property
    def discriminator(self) -> Discriminator:
        return self.__disc

    @property
    def cfg(self) -> TrainConfig:
        return self.__cfg

    @property
    def loss(self) -> GanLossParams:
        return self.__loss

    @property
    def step(self) -> int:
        '''Number of completed training steps.'''
        return self.__step

    @property
    def history(self) -> List[dict]:
        '''Logged rows, see ``METRICS_HEADER``.'''
        return self.__history

    @property
    def cached_epoch(self) -> int:
        '''Epoch whose sample order is held, None before the first batch.'''
        key = self.__order[0]
        return key[0] if key else None

    @property
    def status(self) -> bool:
        '''True if the last run completed.'''
        return self.__status

    @property
    def user_time(self) -> float:
        '''Duration of the last run in seconds.'''
        return self.__user_time


    def batch_indices(self, step:int, n:int) -> List[int]:
        '''Sample indices of batch `step` for a training set of size `n`.'''
        res = []
        for i in range(step*self.cfg.batch_size, (step+1)*self.cfg.batch_size):
            epoch = i // n
            if self.__order[0]!=(epoch, n):
                self.__order = ((epoch, n), np.random.default_rng((self.cfg.seed, epoch)).permutation(n))
            res.append(int(self.__order[1][i % n]))
        return res


    def train_step(self, batch:Sequence[ImagePair]) -> StepMetrics:
        '''Run one step on `batch` and advance the step counter.'''
        metrics = train_step(self.__gen, self.__disc, batch, self.cfg,
                             self.__opt_g, self.__opt_d, self.loss)
        self.__step += 1
        return metrics


    def run(self, train:Sequence[ImagePair], test:Sequence[ImagePair]=None,
            metrics_csv:str=None, callback:Callable=None) -> List[dict]:
        '''Train from the current step up to ``cfg.steps``.

        Args:
            train (Sequence[ImagePair]): Training pairs, non-empty.
            test (Sequence[ImagePair], optional): Held-out pairs for periodic evaluation.
            metrics_csv (str, optional): Append logged rows to this CSV file.
            callback (Callable, optional): Called with each logged row.

        Returns:
            list: Rows logged during this run.
        '''
        if not train: raise DataError('No training pairs.')
        cfg, n = self.cfg, len(train)
        self.__status = False
        start, rows = time.perf_counter(), []
        logging.info('Start training "%s" from step %d to %d on %d pairs.',
                     self.name, self.step, cfg.steps, n)
        try:
            while self.step<cfg.steps:
                batch = [train[i] for i in self.batch_indices(self.step, n)]
                metrics = self.train_step(batch)
                step = self.step
                do_eval = bool(test) and (step % cfg.eval_interval==0 or step==cfg.steps)
                if step % cfg.log_interval and not do_eval and step!=cfg.steps: continue

                row = {'step': step, **metrics.as_dict(), 'psnr_eval': None, 'ssim_eval': None}
                logging.info('step %d: d_loss=%.4f g_adv=%.4f l1=%.4f value=%.4f',
                             step, metrics.d_loss, metrics.g_adv, metrics.l1, metrics.value)
                if do_eval:
                    report = evaluate_pairs(test, self.__gen)
                    row['psnr_eval'], row['ssim_eval'] = report.mean_psnr, report.mean_ssim
                    logging.info('step %d: eval psnr=%.4f dB ssim=%.4f', step,
                                 report.mean_psnr, report.mean_ssim)
                rows.append(row)
                self.__history.append(row)
                if metrics_csv: write_rows(metrics_csv, METRICS_HEADER, [self.format_row(row)], append=True)
                if callback: callback(row)
            self.__status = True
        finally:
            self.__user_time = round(time.perf_counter()-start, 1)
        if metrics_csv and not rows: write_rows(metrics_csv, METRICS_HEADER, [], append=True)
        logging.info('Finished training "%s" at step %d in %.1f sec.', self.name, self.step, self.user_time)
        return rows


    @staticmethod
    def format_row(row:dict) -> list:
        return [format_value(row[k]) if row[k] is not None else '' for k in METRICS_HEADER]


    def checkpoint(self) -> Checkpoint:
        '''Params, optimizer state, step and architecture.'''
        config = {'generator': self.__gen.config_dict(), 'discriminator': self.__disc.config_dict(),
                  'train': asdict(self.cfg), 'loss': asdict(self.loss)}
        ckpt = Checkpoint.from_params(self.__gen.params + self.__disc.params,
                                      step=self.step, seed=self.cfg.seed, config=config)
        for opt in (self.__opt_g, self.__opt_d):
            for name, value in opt.state_dict().items(): ckpt.add(name, value)
        return ckpt


    def restore(self, ckpt:Checkpoint):
        '''Continue from `ckpt`: params, optimizer state and step counter.'''
        ckpt.restore_params(self.__gen.params + self.__disc.params)
        self.__opt_g.load_state_dict(ckpt.arrays)
        self.__opt_d.load_state_dict(ckpt.arrays)
        self.__step = int(ckpt.step)
        logging.info('Resumed "%s" at step %d.', self.name, self.step)


def train_loop(train:Sequence[ImagePair], test:Sequence[ImagePair]=None, cfg:TrainConfig=None,
               gen_cfg:GeneratorConfig=None, disc_cfg:DiscriminatorConfig=None,
               loss:GanLossParams=None, out_dir:str=None, resume:Checkpoint=None,
               name:str=None) -> Tuple[Checkpoint, List[dict]]:
    '''Build networks from the train seed, train, and write ``checkpoint.bin`` and
    ``metrics.csv`` into `out_dir`.

    Returns:
        tuple: Final checkpoint and the rows logged during this run.
    '''
    cfg = cfg or TrainConfig()
    gen = Generator(gen_cfg or GeneratorConfig(), seed=cfg.seed)
    disc = Discriminator(disc_cfg or DiscriminatorConfig(), seed=cfg.seed+1)
    trainer = GanTrainer(gen, disc, cfg, loss, name)
    if resume is not None: trainer.restore(resume)

    metrics_csv = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        metrics_csv = os.path.join(out_dir, 'metrics.csv')
        if resume is None and os.path.exists(metrics_csv): os.remove(metrics_csv)
    rows = trainer.run(train, test, metrics_csv)

    ckpt = trainer.checkpoint()
    if out_dir: save_checkpoint(ckpt, os.path.join(out_dir, 'checkpoint.bin'))
    return ckpt, rows
