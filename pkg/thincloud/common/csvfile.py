'''Schema-checked CSV output.'''

import csv
import os
from typing import (Iterable, Sequence)
from .exception import DataError


def read_header(path:str) -> list:
    '''First row of an existing CSV file, empty list for an empty file.'''
    with open(path, newline='', encoding='utf-8') as f:
        return next(csv.reader(f), [])


def write_rows(path:str, header:Sequence[str], rows:Iterable[Sequence], append:bool=False):
    '''Write `rows` under `header`.

    Args:
        path (str): CSV file, UTF-8.
        header (Sequence[str]): Column names.
        rows (Iterable[Sequence]): Values, one sequence per row.
        append (bool, optional): Append to an existing file with exactly the same header,
            otherwise the file is replaced. Defaults to False.
    '''
    header = list(header)
    exists = append and os.path.isfile(path) and os.path.getsize(path)>0
    if exists:
        found = read_header(path)
        if found!=header:
            raise DataError(f'Cannot append to {path}: header {found} != {header}.')

    with open(path, 'a' if exists else 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        if not exists: writer.writerow(header)
        for row in rows:
            if len(row)!=len(header):
                raise DataError(f'Row {list(row)} does not match header {header}.')
            writer.writerow(row)


def format_value(value, digits:int=10) -> str:
    '''Stable text of numbers: ``inf``, fixed significant digits, or ``str`` for the rest.'''
    if isinstance(value, float):
        if value==float('inf'): return 'inf'
        return f'{value:.{digits}g}' if value==value else 'nan'
    return str(value)
