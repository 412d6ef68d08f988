import csv
import logging
import math
from typing import Dict, List, Sequence

import numpy as np

from pykc.scaling import SchemaMismatchError

logger = logging.getLogger(__name__)

STATISTICS = ('mean', 'median')
NON_NUMERIC_KEYS = ('replica', 'seed')


def _read_table(path: str):
    with open(path, newline='') as file:
        reader = csv.DictReader(file)
        return list(reader.fieldnames or []), list(reader)


def _as_float(text: str):
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


class AggregateRow:
    def __init__(self, column: str, center: float, stderr: float, minimum: float, maximum: float, n: int,
                 statistic: str):
        self.column = column
        self.center = center
        self.stderr = stderr
        self.minimum = minimum
        self.maximum = maximum
        self.n = n
        self.statistic = statistic

    @property
    def single(self) -> bool:
        return self.n == 1

    def to_json(self):
        return {'column': self.column, self.statistic: self.center, 'stderr': self.stderr, 'min': self.minimum,
                'max': self.maximum, 'n': self.n, 'single': self.single}


def aggregate(paths: Sequence[str], statistic: str = 'mean') -> List[AggregateRow]:
    """
    Pools the numeric columns of result tables with one header. Values are sorted before summation, so the
    output does not depend on the order of the files or of their rows.

    :param paths: CSV result tables
    :param statistic: 'mean' or 'median'
    :return: one row per numeric column, in header order
    """
    if statistic not in STATISTICS:
        raise ValueError(f'invalid argument value: expecting statistic in {", ".join(STATISTICS)}, got {statistic}')
    if not paths:
        raise ValueError('invalid argument value: expecting at least one file')
    header = None
    columns: Dict[str, List[float]] = {}
    for path in paths:
        fields, rows = _read_table(path)
        if header is None:
            header = fields
            columns = {name: [] for name in fields if name not in NON_NUMERIC_KEYS}
        elif fields != header:
            raise SchemaMismatchError(f'{path}: header {fields} differs from {header}')
        for row in rows:
            for name in columns:
                value = _as_float(row[name])
                if value is not None:
                    columns[name].append(value)
    result = []
    for name, values in columns.items():
        if not values:
            continue
        values = sorted(values)
        n = len(values)
        mean = math.fsum(values) / n
        if statistic == 'mean':
            center = mean
            stderr = math.sqrt(math.fsum((x - mean) ** 2 for x in values) / (n - 1) / n) if n > 1 else 0.0
        else:
            center = float(np.median(values))
            # asymptotic standard error of the median of a normal sample
            stderr = math.sqrt(math.pi / 2) * math.sqrt(math.fsum((x - mean) ** 2 for x in values) / (n - 1) / n) \
                if n > 1 else 0.0
        result.append(AggregateRow(name, center, stderr, values[0], values[-1], n, statistic))
    if any(row.single for row in result):
        logger.warning('some columns hold a single value; their standard error is reported as 0')
    return result


def write_aggregate_csv(path_or_file, rows: Sequence[AggregateRow]):
    def write(file):
        writer = csv.writer(file)
        statistic = rows[0].statistic if rows else 'mean'
        writer.writerow(['column', statistic, 'stderr', 'min', 'max', 'n', 'single'])
        for row in rows:
            writer.writerow([row.column, repr(row.center), repr(row.stderr), repr(row.minimum), repr(row.maximum),
                             row.n, row.single])

    if isinstance(path_or_file, str):
        with open(path_or_file, 'w', newline='') as file:
            write(file)
    else:
        write(path_or_file)
