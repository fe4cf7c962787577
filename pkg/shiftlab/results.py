import dataclasses
import logging
import os
import tempfile
import typing
from pathlib import Path

import pandas as pd

from .errors import ShiftLabIOError

logger = logging.getLogger(__name__)

RESULTS_COLUMNS = ['experiment', 'mode', 'seed', 'round', 'mpca', 'seconds']


@dataclasses.dataclass(frozen=True)
class ResultsRow:
    """
    One evaluation of one run: a training run (round is the number of epochs) or one active learning round
    """
    experiment: str
    mode: str
    """The training mode, or the selection strategy of an active learning run"""
    seed: int
    round: int
    mpca: float
    seconds: float = 0.0


def atomic_write_frame(frame: pd.DataFrame, path, float_format: str = '%.6f'):
    """
    Writes a data frame as CSV to a temporary file next to path, then renames it over path, so that readers never see
    a partially written file
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handle, temp = tempfile.mkstemp(dir=str(path.parent), prefix='.' + path.name, suffix='.tmp')
        try:
            with os.fdopen(handle, 'w', newline='') as stream:
                frame.to_csv(stream, index=False, float_format=float_format, lineterminator='\n')
            os.replace(temp, str(path))
        except BaseException:
            if os.path.exists(temp):
                os.unlink(temp)
            raise
    except OSError as e:
        raise ShiftLabIOError('Could not write {}: {}'.format(path, e)) from e


def results_frame(rows: typing.Iterable[ResultsRow]) -> pd.DataFrame:
    """
    The rows as a data frame sorted by (mode, seed, round), independent of the order they were produced in
    """
    frame = pd.DataFrame([dataclasses.astuple(row) for row in rows], columns=RESULTS_COLUMNS)
    frame = frame.astype({'seed': 'int64', 'round': 'int64', 'mpca': 'float64', 'seconds': 'float64'})
    return frame.sort_values(['mode', 'seed', 'round', 'experiment'], kind='mergesort').reset_index(drop=True)


def write_results_csv(rows: typing.Iterable[ResultsRow], path):
    """
    Writes results rows with the header experiment,mode,seed,round,mpca,seconds and reals to 6 decimals
    """
    frame = results_frame(rows)
    atomic_write_frame(frame, path)
    logger.info('Wrote %d result rows to %s', len(frame), path)


def read_results_csv(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except OSError as e:
        raise ShiftLabIOError('Could not read {}: {}'.format(path, e)) from e
    missing = set(RESULTS_COLUMNS).difference(frame.columns)
    if missing:
        raise ShiftLabIOError('The results file {} lacks the columns {}'.format(path, sorted(missing)))
    return frame
