'''Batch evaluation of image pairs.'''

from dataclasses import (dataclass, field)
from typing import (Iterable, List)
import logging
import math
from prettytable import PrettyTable
from ..common.csvfile import (format_value, write_rows)
from ..common.exception import (DataError, DimensionError, NumericalError)
from .metrics import (PSNR_CAP, psnr, ssim)


REPORT_HEADER = ('id', 'psnr_db', 'ssim')


@dataclass
class ImageScore:
    id: str
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    '''Per-image scores, aggregates and notes.'''
    scores: List[ImageScore] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    source: str = 'baseline'

    @property
    def count(self) -> int:
        return len(self.scores)

    @property
    def capped(self) -> int:
        '''Number of infinite PSNR values capped in ``mean_psnr``.'''
        return sum(1 for s in self.scores if math.isinf(s.psnr_db))

    @property
    def mean_psnr(self) -> float:
        if not self.scores: return float('nan')
        return sum(min(s.psnr_db, PSNR_CAP) for s in self.scores) / self.count

    @property
    def mean_ssim(self) -> float:
        if not self.scores: return float('nan')
        return sum(s.ssim for s in self.scores) / self.count


    def rows(self) -> list:
        '''CSV rows: one per image, then one ``note`` row per note with the text in the second
        column, aggregate last.'''
        res = [[s.id, format_value(s.psnr_db), format_value(s.ssim)] for s in self.scores]
        res.extend(['note', note, ''] for note in self.notes)
        res.append(['mean', format_value(self.mean_psnr), format_value(self.mean_ssim)])
        return res


    def to_csv(self, path:str):
        write_rows(path, REPORT_HEADER, self.rows())


    def summary(self) -> PrettyTable:
        '''Aggregate in tabular format.'''
        table = PrettyTable()
        table.field_names = ['Source', 'Images', 'PSNR (dB)', 'SSIM', 'Notes']
        table.add_row([self.source, self.count, round(self.mean_psnr, 4), round(self.mean_ssim, 4),
                       '; '.join(self.notes) or '-'])
        return table


def evaluate_pairs(pairs:Iterable, generator=None, peak:float=1.0) -> MetricReport:
    '''PSNR and SSIM of ``G(cloudy)`` against clear, or of cloudy against clear when no
    generator is given. Pairs that cannot be scored are skipped and listed in the notes.

    Args:
        pairs (Iterable[ImagePair]): Aligned pairs.
        generator (Generator, optional): Restoration model. Defaults to None, i.e. baseline.
        peak (float, optional): Dynamic range. Defaults to 1.0.
    '''
    report = MetricReport(source='generated' if generator is not None else 'baseline')
    skipped = []
    for pair in pairs:
        try:
            candidate = generator.forward(pair.cloudy) if generator is not None else pair.cloudy
            report.scores.append(ImageScore(pair.id, psnr(candidate, pair.clear, peak),
                                            ssim(candidate, pair.clear, peak=peak)))
        except (DimensionError, NumericalError) as e:
            skipped.append(pair.id)
            logging.warning('Skipped pair %s: %s', pair.id, e)

    if skipped: report.notes.append(f'{len(skipped)} pair(s) skipped: {",".join(skipped)}')
    if not report.scores:
        raise DataError('No image pair to evaluate.')
    if report.capped:
        report.notes.append(f'{report.capped} infinite PSNR value(s) capped at {PSNR_CAP:g} dB in the mean')
    return report
