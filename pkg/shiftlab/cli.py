"""
The experiment harness: ``shiftlab <train|al|grid|significance>``.
"""
import argparse
import concurrent.futures
import dataclasses
import itertools
import logging
import sys
import time
import typing
from pathlib import Path

import pandas as pd

from .active_learning import run_active_learning
from .config import ExperimentConfig, parse_config, resolve_output_dir
from .data import DatasetSplit, SOURCE, TARGET, batch_composition, export_csv
from .errors import (ShiftLabBatchError, ShiftLabConfigError, ShiftLabDataError, ShiftLabDimensionError, ShiftLabError,
                     ShiftLabIOError, ShiftLabStaleTapeError, ShiftLabStatsError)
from .model import Mode, TrainConfig, build_model, evaluate, train
from .pool import Pool
from .results import ResultsRow, atomic_write_frame, read_results_csv, results_frame, write_results_csv
from .stats import (aggregate_runs, cross_domain_table, grid_search, reach_table, significance_from_results,
                    significance_table)
from .version import __version__

logger = logging.getLogger(__name__)

COMMANDS = ('train', 'al', 'grid', 'significance')

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4
EXIT_STATS = 5
EXIT_IO = 6

EXIT_CODES_HELP = '''exit codes:
  0  success
  1  unexpected error
  2  invalid configuration or arguments
  3  dataset error (empty dataset, category shift, exhausted pool...)
  4  training error (batch, tape or shape violation)
  5  statistics error
  6  a result file could not be written
'''


def exit_code(error: BaseException) -> int:
    """
    The exit code of the CLI for an exception
    """
    if isinstance(error, (ShiftLabDimensionError, ShiftLabBatchError, ShiftLabStaleTapeError, FloatingPointError)):
        return EXIT_TRAINING
    if isinstance(error, ShiftLabConfigError):
        return EXIT_CONFIG
    if isinstance(error, ShiftLabDataError):
        return EXIT_DATA
    if isinstance(error, ShiftLabStatsError):
        return EXIT_STATS
    if isinstance(error, ShiftLabIOError):
        return EXIT_IO
    return EXIT_UNEXPECTED


@dataclasses.dataclass
class TrainOutcome:
    row: ResultsRow
    cross: typing.List[typing.Tuple[str, str, float]]
    history: typing.List[dict]


def _fan_out(fn, tasks: typing.Sequence, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda task: fn(*task), tasks))
    return [fn(*task) for task in tasks]


def _seconds(cfg: ExperimentConfig, start: float) -> float:
    return time.perf_counter() - start if cfg.timing else 0.0


def train_once(cfg: ExperimentConfig, data: DatasetSplit, seed: int) -> TrainOutcome:
    """
    Trains the configured mode from scratch with one seed and evaluates it on the test sets of both domains
    """
    start = time.perf_counter()
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    pool = Pool.from_split(data, reveal_target=train_cfg.mode is Mode.TargetOnly)
    model = build_model(train_cfg, data.dim, data.num_classes, seed)
    _, history = train(model, pool, train_cfg)
    if pool.oracle_reads:
        raise ShiftLabDataError('{} training read {} target labels'.format(train_cfg.mode.value, pool.oracle_reads))

    fingerprint = train_cfg.fingerprint()
    target = evaluate(model, data.target.test, TARGET, seed, fingerprint)
    source = evaluate(model, data.source.test, SOURCE, seed, fingerprint)
    mode = train_cfg.mode.value
    logger.info('%s seed %d: target mpca %.4f, source mpca %.4f', mode, seed, target.mpca, source.mpca)
    return TrainOutcome(
        row=ResultsRow(cfg.name, mode, seed, train_cfg.epochs, target.mpca, _seconds(cfg, start)),
        cross=[(mode, SOURCE, source.mpca), (mode, TARGET, target.mpca)],
        history=[
            {'mode': mode, 'seed': seed, 'epoch': epoch, 'cls_loss': report.cls_loss, 'dom_loss': report.dom_loss,
             'conf_loss': report.conf_loss}
            for epoch, report in enumerate(history)
        ]
    )


def export_dataset(cfg: ExperimentConfig, data: DatasetSplit, out: Path):
    """
    Writes the generated synthetic samples next to the results. Image folders are left where they are
    """
    if cfg.dataset.kind == 'synthetic':
        export_csv(data, out / 'dataset.csv')


def cmd_train(cfg: ExperimentConfig, out: Path, seeds: typing.Sequence[int], workers: int):
    data = cfg.dataset.load()
    export_dataset(cfg, data, out)
    outcomes = _fan_out(lambda seed: train_once(cfg, data, seed), [(seed,) for seed in seeds], workers)

    rows = [outcome.row for outcome in outcomes]
    write_results_csv(rows, out / 'train.csv')

    aggregate = aggregate_runs([row.mpca for row in rows])
    summary = pd.DataFrame([{
        'mode': cfg.train.mode.value,
        'norm': cfg.train.effective_norm().value,
        'runs': len(rows),
        'mean': aggregate.mean,
        'std': aggregate.std,
    }])
    atomic_write_frame(summary, out / 'train_summary.csv')
    atomic_write_frame(cross_domain_table(itertools.chain.from_iterable(o.cross for o in outcomes)),
                       out / 'cross_domain.csv')
    history = pd.DataFrame(
        list(itertools.chain.from_iterable(o.history for o in outcomes)),
        columns=['mode', 'seed', 'epoch', 'cls_loss', 'dom_loss', 'conf_loss']
    ).sort_values(['seed', 'epoch'], kind='mergesort')
    atomic_write_frame(history, out / 'train_history.csv')


def check_active_learning(cfg: ExperimentConfig):
    """
    Active learning always trains UADASemi models, so every batch must hold 2 rows of each domain
    """
    try:
        batch_composition(cfg.train.batch_size, cfg.train.source_fraction)
    except ShiftLabConfigError as e:
        raise ShiftLabConfigError(str(e), key='train.batch_size') from e


def active_learning_once(cfg: ExperimentConfig, data: DatasetSplit, strategy, seed: int):
    start = time.perf_counter()
    al_cfg = dataclasses.replace(cfg.al, strategy=strategy, seed=seed)
    results = run_active_learning(dataclasses.replace(cfg.train, seed=seed), al_cfg, data)
    seconds = _seconds(cfg, start)
    rows = [ResultsRow(cfg.name, strategy.value, seed, r.round, r.mpca, seconds) for r in results]
    selected = [
        {'strategy': strategy.value, 'seed': seed, 'round': r.round,
         'selected_ids': ' '.join(str(i) for i in r.selected_ids)}
        for r in results
    ]
    return rows, selected


def cmd_al(cfg: ExperimentConfig, out: Path, seeds: typing.Sequence[int], workers: int):
    check_active_learning(cfg)
    data = cfg.dataset.load()
    export_dataset(cfg, data, out)
    tasks = [(strategy, seed) for strategy in cfg.strategies for seed in seeds]
    outcomes = _fan_out(lambda strategy, seed: active_learning_once(cfg, data, strategy, seed), tasks, workers)

    rows = list(itertools.chain.from_iterable(rows for rows, _ in outcomes))
    write_results_csv(rows, out / 'al.csv')
    selected = pd.DataFrame(
        list(itertools.chain.from_iterable(selected for _, selected in outcomes)),
        columns=['strategy', 'seed', 'round', 'selected_ids']
    ).sort_values(['strategy', 'seed', 'round'], kind='mergesort')
    atomic_write_frame(selected, out / 'al_selected.csv')
    if cfg.reach_mpca is not None:
        atomic_write_frame(reach_table(results_frame(rows), cfg.al.annotations_before, cfg.reach_mpca),
                           out / 'al_reach.csv')


def validation_score(cfg: ExperimentConfig, seed: int) -> typing.Callable[[float, float, DatasetSplit], float]:
    """
    A grid search objective: trains one run with the given lr and l2 and returns the target validation accuracy
    """
    def score(lr: float, l2: float, data: DatasetSplit) -> float:
        train_cfg: TrainConfig = dataclasses.replace(cfg.train, lr=lr, l2=l2, seed=seed)
        pool = Pool.from_split(data, reveal_target=train_cfg.mode is Mode.TargetOnly)
        model = build_model(train_cfg, data.dim, data.num_classes, seed)
        train(model, pool, train_cfg)
        return evaluate(model, data.target.val, TARGET, seed).mpca

    return score


def cmd_grid(cfg: ExperimentConfig, out: Path, seeds: typing.Sequence[int], workers: int):
    data = cfg.dataset.load()
    result = grid_search(cfg.grid, validation_score(cfg, seeds[0]), data, workers=workers)
    atomic_write_frame(result.table, out / 'grid.csv')
    best = result.table[(result.table['lr'] == result.lr) & (result.table['l2'] == result.l2)]
    atomic_write_frame(best[['lr', 'l2', 'mpca']], out / 'grid_best.csv')
    logger.info('Best grid cell: lr=%s l2=%s', result.lr, result.l2)


def cmd_significance(cfg: ExperimentConfig, out: Path, input_path: typing.Optional[str]):
    path = Path(input_path or cfg.significance_input or out / 'al.csv')
    matrix = significance_from_results(read_results_csv(path))
    table = significance_table(matrix)
    atomic_write_frame(table, out / 'significance.csv', float_format='%.4f')
    logger.info('Wrote %d strategy pairs to %s', len(table), out / 'significance.csv')


def cmd_run(cfg: ExperimentConfig, command: str, out: typing.Optional[Path] = None,
            seeds: typing.Optional[typing.Sequence[int]] = None, workers: typing.Optional[int] = None,
            input_path: typing.Optional[str] = None) -> int:
    """
    Runs one command and reports any error as a diagnostic on stderr

    :return: The exit code
    """
    out = Path(out) if out is not None else resolve_output_dir(None, cfg)
    seeds = tuple(seeds) if seeds else cfg.run_seeds()
    workers = workers or cfg.workers
    try:
        if command == 'train':
            cmd_train(cfg, out, seeds, workers)
        elif command == 'al':
            cmd_al(cfg, out, seeds, workers)
        elif command == 'grid':
            cmd_grid(cfg, out, seeds, workers)
        elif command == 'significance':
            cmd_significance(cfg, out, input_path)
        else:
            raise ShiftLabConfigError('Unknown command {!r}; use one of {}'.format(command, ', '.join(COMMANDS)))
    except (ShiftLabError, FloatingPointError) as e:
        logger.debug('The %s command failed', command, exc_info=True)
        print('shiftlab {}: error: {}'.format(command, e), file=sys.stderr)
        return exit_code(e)
    return EXIT_OK


def _seed_list(text: str) -> typing.Tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(',') if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError('{!r} is not a comma separated list of integers'.format(text))
    if not seeds or len(set(seeds)) != len(seeds) or min(seeds) < 0:
        raise argparse.ArgumentTypeError('{!r} is not a list of distinct non-negative seeds'.format(text))
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='shiftlab',
        description='Unsupervised adversarial domain adaptation and active learning experiments',
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', help='A key = value configuration file. All defaults if omitted')
    parser.add_argument('--out', help='The output directory. Defaults to output.dir, $SHIFTLAB_OUT, ./shiftlab-out')
    parser.add_argument('--seeds', type=_seed_list, help='Comma separated run seeds, overriding run.seeds')
    parser.add_argument('--workers', type=int, help='The number of runs trained concurrently')
    parser.add_argument('--input', help='The al.csv the significance command reads')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for progress, -vv for debug output')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    return parser


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    if args.workers is not None and args.workers < 1:
        print('shiftlab: error: --workers must be positive', file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config) if args.config else ExperimentConfig()
    except ShiftLabError as e:
        print('shiftlab: error: {}'.format(e), file=sys.stderr)
        return exit_code(e)
    out = resolve_output_dir(args.out, cfg)
    return cmd_run(cfg, args.command, out, args.seeds, args.workers, args.input)
