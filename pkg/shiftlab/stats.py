"""
Evaluation statistics: mean per-class accuracy, aggregation over repeated runs, the two-sample Student's t-test with
the pairwise significance table over active learning rounds, and the grid search over learning rate and L2 strength.
"""
import concurrent.futures
import dataclasses
import itertools
import logging
import math
import typing

import numpy as np
import pandas as pd
from scipy import special

from .errors import ShiftLabStatsError

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05


@dataclasses.dataclass(frozen=True)
class RunSummary:
    seed: typing.Optional[int]
    recalls: typing.Tuple[float, ...]
    mpca: float
    fingerprint: typing.Optional[str] = None


@dataclasses.dataclass(frozen=True)
class RunAggregate:
    mean: float
    std: float
    values: typing.Tuple[float, ...]


@dataclasses.dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    significant: bool
    degenerate: bool = False
    """True if both samples have zero variance but different means"""


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """
    The learning rates and L2 strengths to search
    """
    lrs: typing.Tuple[float, ...] = (1e-3, 1e-4)
    l2s: typing.Tuple[float, ...] = (0.001, 0.01, 0.05, 0.1, 0.15)


@dataclasses.dataclass(frozen=True)
class GridResult:
    lr: float
    l2: float
    table: pd.DataFrame
    """One row per cell with the columns lr, l2, mpca and status (ok or failed)"""


def mean_per_class_accuracy(preds: typing.Sequence[int], truths: typing.Sequence[int],
                            num_classes: int) -> typing.Tuple[float, np.ndarray]:
    """
    The arithmetic mean of the per-class recalls

    :return: The mean per-class accuracy and the recall of every class
    """
    preds = np.asarray(preds, dtype=np.intp)
    truths = np.asarray(truths, dtype=np.intp)
    if preds.shape != truths.shape:
        raise ShiftLabStatsError('Got {} predictions for {} ground truths'.format(preds.size, truths.size))
    totals = np.bincount(truths, minlength=num_classes)[:num_classes]
    missing = np.flatnonzero(totals == 0)
    if missing.size:
        raise ShiftLabStatsError('The class {} has no ground truth instances'.format(missing[0]))
    correct = np.bincount(truths[preds == truths], minlength=num_classes)[:num_classes]
    recalls = correct / totals
    return float(recalls.mean()), recalls


def aggregate_runs(summaries: typing.Sequence[typing.Union[RunSummary, float]]) -> RunAggregate:
    """
    The mean and sample standard deviation (n - 1 denominator, 0 for a single run) of the runs' accuracies
    """
    if not summaries:
        raise ShiftLabStatsError('Cannot aggregate zero runs')
    values = np.array([s.mpca if isinstance(s, RunSummary) else float(s) for s in summaries])
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return RunAggregate(float(values.mean()), std, tuple(values.tolist()))


def two_tailed_p(t: float, df: float) -> float:
    """
    The two-tailed p-value of a t statistic, through the regularized incomplete beta function
    I_{df/(df+t²)}(df/2, 1/2)
    """
    if t == 0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return float(np.clip(special.betainc(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0))


def students_ttest(a: typing.Sequence[float], b: typing.Sequence[float], equal_var: bool = True,
                   paired: bool = False) -> TTestResult:
    """
    Two-sample t-test. By default this is Student's test with pooled variance and n1 + n2 - 2 degrees of freedom

    :param equal_var: False for Welch's test, with Welch-Satterthwaite degrees of freedom
    :param paired: True for the paired test on the differences a - b
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ShiftLabStatsError('A t-test needs at least 2 values per sample, got {} and {}'.format(len(a), len(b)))

    if paired:
        if len(a) != len(b):
            raise ShiftLabStatsError('A paired t-test needs samples of equal size, got {} and {}'.format(len(a), len(b)))
        differences = a - b
        diff = differences.mean()
        se = differences.std(ddof=1) / math.sqrt(len(a))
        df = len(a) - 1
    elif equal_var:
        n1, n2 = len(a), len(b)
        diff = a.mean() - b.mean()
        pooled = ((n1 - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / (n1 + n2 - 2)
        se = math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
        df = n1 + n2 - 2
    else:
        va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
        diff = a.mean() - b.mean()
        se = math.sqrt(va + vb)
        df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1)) if se > 0 else len(a) + len(b) - 2

    if se == 0:
        if diff == 0:
            return TTestResult(0.0, df, 1.0, False)
        return TTestResult(math.copysign(math.inf, diff), df, 0.0, True, degenerate=True)

    t = float(diff / se)
    p = two_tailed_p(t, df)
    return TTestResult(t, df, p, p < SIGNIFICANCE_LEVEL)


def significance_matrix(results: typing.Mapping[str, typing.Mapping[int, typing.Sequence[float]]]) \
        -> typing.Dict[typing.Tuple[str, str], typing.Dict[int, TTestResult]]:
    """
    Tests every unordered pair of distinct strategies against each other in every round. A strategy is never paired
    with itself, so a single strategy gives an empty matrix

    :param results: For every strategy, the accuracies of all runs for every round
    :return: For every pair (in sorted name order), the test result of every round
    """
    rounds = sorted(set(itertools.chain.from_iterable(per_round.keys() for per_round in results.values())))
    for strategy in sorted(results):
        for r in rounds:
            values = results[strategy].get(r)
            if values is None:
                raise ShiftLabStatsError('There are no results for the strategy {} in round {}'.format(strategy, r))
            if len(values) < 2:
                raise ShiftLabStatsError(
                    'The strategy {} has {} run(s) in round {}; at least 2 are needed'.format(strategy, len(values), r)
                )

    return {
        (a, b): {r: students_ttest(results[a][r], results[b][r]) for r in rounds}
        for a, b in itertools.combinations(sorted(results), 2)
    }


def significance_table(matrix: typing.Mapping[typing.Tuple[str, str], typing.Mapping[int, TTestResult]]) \
        -> pd.DataFrame:
    """
    The p-values of a significance matrix with one row per pair, labelled "a & b", and one column per round
    """
    rows = []
    for (a, b), per_round in matrix.items():
        row = {'pair': '{} & {}'.format(a, b)}
        row.update({'round_{}'.format(r): per_round[r].p for r in sorted(per_round)})
        rows.append(row)
    return pd.DataFrame(rows) if rows else pd.DataFrame(columns=['pair'])


def significance_from_results(frame: pd.DataFrame) \
        -> typing.Dict[typing.Tuple[str, str], typing.Dict[int, TTestResult]]:
    """
    Builds the significance matrix from an active learning results frame (mode holds the strategy)
    """
    results = {}
    for (strategy, r), group in frame.sort_values(['mode', 'round', 'seed']).groupby(['mode', 'round']):
        results.setdefault(strategy, {})[int(r)] = group['mpca'].tolist()
    return significance_matrix(results)


def annotations_to_reach(curve: typing.Mapping[int, float], annotations: typing.Callable[[int], int],
                         threshold: float) -> typing.Optional[int]:
    """
    The number of annotations after which a learning curve first reaches a threshold, for instance the accuracy of a
    target-only classifier

    :param curve: The (mean) accuracy of every round
    :param annotations: Maps a round onto the number of annotated samples it was trained with
    :return: None if the curve never reaches the threshold
    """
    for r in sorted(curve):
        if curve[r] >= threshold:
            return annotations(r)
    return None


def reach_table(frame: pd.DataFrame, annotations: typing.Callable[[int], int], threshold: float) -> pd.DataFrame:
    """
    The annotation cost of every strategy of an active learning results frame: the annotations after which its learning
    curve, averaged over the runs, first reaches the threshold. The cell is empty for a strategy that never does
    """
    curves = frame.groupby(['mode', 'round'])['mpca'].mean()
    strategies = sorted(frame['mode'].unique())
    reached = [
        annotations_to_reach({int(r): v for r, v in curves[strategy].items()}, annotations, threshold)
        for strategy in strategies
    ]
    return pd.DataFrame({
        'strategy': strategies,
        'threshold': [threshold] * len(strategies),
        'annotations': pd.array(reached, dtype='Int64'),
    })


def cross_domain_table(rows: typing.Iterable[typing.Tuple[str, str, float]]) -> pd.DataFrame:
    """
    The mean accuracy of every training mode on every evaluation domain

    :param rows: (mode, evaluation domain, mpca) triples, one per run
    """
    frame = pd.DataFrame(list(rows), columns=['mode', 'domain', 'mpca'])
    table = frame.pivot_table(index='mode', columns='domain', values='mpca', aggfunc='mean')
    table.columns.name = None
    return table.reset_index()


def _run_cell(train_fn, lr: float, l2: float, data) -> dict:
    try:
        score = float(train_fn(lr, l2, data))
        if math.isnan(score):
            raise ValueError('the validation accuracy is NaN')
    except Exception as e:
        logger.warning('Grid cell lr=%s l2=%s failed: %s', lr, l2, e)
        return {'lr': lr, 'l2': l2, 'mpca': float('nan'), 'status': 'failed'}
    logger.info('Grid cell lr=%s l2=%s: validation mpca %.4f', lr, l2, score)
    return {'lr': lr, 'l2': l2, 'mpca': score, 'status': 'ok'}


def grid_search(grid: GridSpec, train_fn: typing.Callable[[float, float, typing.Any], float], data,
                workers: int = 1) -> GridResult:
    """
    Trains one run per (lr, l2) cell and picks the cell with the best validation accuracy. Ties go to the smaller
    l2, then the smaller lr

    :param train_fn: Trains with the given lr and l2 on data and returns the validation mean per-class accuracy
    :param workers: The number of cells trained concurrently
    """
    cells = [(lr, l2) for lr in grid.lrs for l2 in grid.l2s]
    if not cells:
        raise ShiftLabStatsError('The grid has no cells')

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda cell: _run_cell(train_fn, cell[0], cell[1], data), cells))
    else:
        records = [_run_cell(train_fn, lr, l2, data) for lr, l2 in cells]

    table = pd.DataFrame(records, columns=['lr', 'l2', 'mpca', 'status'])
    table = table.sort_values(['lr', 'l2'], kind='mergesort').reset_index(drop=True)
    ok = table[table['status'] == 'ok']
    if ok.empty:
        raise ShiftLabStatsError('Every one of the {} grid cells failed'.format(len(table)))
    best = ok.sort_values(['mpca', 'l2', 'lr'], ascending=[False, True, True], kind='mergesort').iloc[0]
    return GridResult(float(best['lr']), float(best['l2']), table)
