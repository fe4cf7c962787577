import contextlib
import io
import tempfile
import unittest
from pathlib import Path

import pandas as pd

from shiftlab.cli import (EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_STATS, EXIT_TRAINING, EXIT_UNEXPECTED,
                          build_parser, cmd_run, exit_code, main)
from shiftlab.config import parse_config
from shiftlab.errors import (ShiftLabBatchError, ShiftLabConfigError, ShiftLabDataError, ShiftLabDimensionError,
                             ShiftLabIOError, ShiftLabPoolExhaustedError, ShiftLabStatsError)
from shiftlab.results import ResultsRow, write_results_csv
from shiftlab.version import __version__

TINY = '''
dataset.per_class = 25
train.epochs = 1
train.runs = 2
train.batch_size = 16
train.hidden = 8
train.disc_hidden = 4
train.groups = 2
al.k = 2
al.rounds = 1
al.strategies = Random, Certainty
grid.lrs = 0.01
grid.l2s = 0.001, 0.01
'''


class CliTestBase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def run_command(self, command: str, text: str = TINY, **kwargs) -> int:
        with contextlib.redirect_stderr(io.StringIO()) as stderr:
            code = cmd_run(parse_config(text), command, self.out, **kwargs)
        self.stderr = stderr.getvalue()
        return code


class TrainCommand(CliTestBase):
    def test_train(self):
        self.assertEqual(self.run_command('train'), EXIT_OK, self.stderr)
        results = pd.read_csv(self.out / 'train.csv')
        self.assertEqual(results['seed'].tolist(), [0, 1])
        self.assertEqual(results['mode'].unique().tolist(), ['UADA'])
        self.assertTrue((results['seconds'] == 0).all())

        summary = pd.read_csv(self.out / 'train_summary.csv')
        self.assertEqual(summary.loc[0, 'runs'], 2)
        self.assertEqual(summary.loc[0, 'norm'], 'TransNorm')
        self.assertEqual(list(pd.read_csv(self.out / 'cross_domain.csv').columns), ['mode', 'source', 'target'])
        self.assertEqual(len(pd.read_csv(self.out / 'train_history.csv')), 2)

        dataset = pd.read_csv(self.out / 'dataset.csv')
        self.assertEqual(list(dataset.columns), ['id', 'domain', 'label', 'x0', 'x1'])
        self.assertEqual(len(dataset), 2 * 5 * 25)
        self.assertEqual(sorted(dataset['domain'].unique()), ['source', 'target'])

    def test_zero_epochs(self):
        text = TINY.replace('train.epochs = 1', 'train.epochs = 0')
        self.assertEqual(self.run_command('train', text), EXIT_OK, self.stderr)
        self.assertEqual(pd.read_csv(self.out / 'train.csv')['round'].tolist(), [0, 0])

    def test_baseline(self):
        text = TINY + 'train.mode = SourceOnly\n'
        self.assertEqual(self.run_command('train', text, seeds=[5]), EXIT_OK, self.stderr)
        self.assertEqual(pd.read_csv(self.out / 'train_summary.csv').loc[0, 'norm'], 'BatchNorm')
        self.assertEqual(pd.read_csv(self.out / 'train.csv')['seed'].tolist(), [5])


class ActiveLearningCommand(CliTestBase):
    def test_al(self):
        self.assertEqual(self.run_command('al'), EXIT_OK, self.stderr)
        results = pd.read_csv(self.out / 'al.csv')
        self.assertEqual(len(results), 2 * 2 * 2)
        self.assertEqual(sorted(results['mode'].unique()), ['Certainty', 'Random'])
        selected = pd.read_csv(self.out / 'al_selected.csv', keep_default_na=False)
        self.assertEqual(len(selected), 8)
        first_round = selected[selected['round'] == 0]['selected_ids']
        self.assertTrue(all(len(ids.split()) == 2 for ids in first_round))
        self.assertTrue((self.out / 'dataset.csv').exists())
        self.assertFalse((self.out / 'al_reach.csv').exists())

    def test_reach(self):
        self.assertEqual(self.run_command('al', TINY + 'al.reach_mpca = 0\n'), EXIT_OK, self.stderr)
        reach = pd.read_csv(self.out / 'al_reach.csv')
        self.assertEqual(list(reach.columns), ['strategy', 'threshold', 'annotations'])
        self.assertEqual(reach['strategy'].tolist(), ['Certainty', 'Random'])
        self.assertEqual(reach['annotations'].tolist(), [0, 0])

    def test_deterministic(self):
        """
        Repeated runs, serial or concurrent, write byte-identical files
        """
        self.assertEqual(self.run_command('al', workers=1), EXIT_OK, self.stderr)
        first = {name: (self.out / name).read_bytes() for name in ('al.csv', 'al_selected.csv', 'dataset.csv')}
        self.assertEqual(self.run_command('al', workers=3), EXIT_OK, self.stderr)
        for name, content in first.items():
            self.assertEqual((self.out / name).read_bytes(), content, name)

    def test_exhausted_pool(self):
        self.assertEqual(self.run_command('al', TINY.replace('al.k = 2', 'al.k = 1000')), EXIT_DATA)
        self.assertIn('exhausted', self.stderr)

    def test_batch_too_small(self):
        text = TINY.replace('train.batch_size = 16', 'train.batch_size = 3') + 'train.mode = SourceOnly\n'
        self.assertEqual(self.run_command('al', text), EXIT_CONFIG)


class GridCommand(CliTestBase):
    def test_grid(self):
        self.assertEqual(self.run_command('grid'), EXIT_OK, self.stderr)
        self.assertEqual(len(pd.read_csv(self.out / 'grid.csv')), 2)
        best = pd.read_csv(self.out / 'grid_best.csv')
        self.assertEqual(list(best.columns), ['lr', 'l2', 'mpca'])
        self.assertEqual(len(best), 1)

    def test_full_grid(self):
        """
        Every cell of the 2 x 5 grid is trained, and the best cell does not depend on the number of workers
        """
        text = TINY.replace('grid.lrs = 0.01\ngrid.l2s = 0.001, 0.01\n', '')
        self.assertEqual(self.run_command('grid', text), EXIT_OK, self.stderr)
        table = pd.read_csv(self.out / 'grid.csv')
        self.assertEqual(len(table), 10)
        self.assertEqual(sorted(set(table['lr'])), [0.0001, 0.001])
        self.assertEqual(sorted(set(table['l2'])), [0.001, 0.01, 0.05, 0.1, 0.15])
        best = (self.out / 'grid_best.csv').read_bytes()
        self.assertAlmostEqual(pd.read_csv(self.out / 'grid_best.csv').loc[0, 'mpca'], table['mpca'].max())

        self.assertEqual(self.run_command('grid', text, workers=4), EXIT_OK, self.stderr)
        self.assertEqual((self.out / 'grid_best.csv').read_bytes(), best)


class SignificanceCommand(CliTestBase):
    def write_results(self, seeds=range(3)) -> Path:
        path = self.out / 'input.csv'
        rows = [
            ResultsRow('exp', strategy, seed, r, 0.5 + 0.01 * i + 0.001 * seed + 0.002 * r)
            for i, strategy in enumerate(['Random', 'Certainty', 'DivDis', 'IWERM', 'EMOC'])
            for seed in seeds for r in range(2)
        ]
        write_results_csv(rows, path)
        return path

    def test_pairs(self):
        path = self.write_results()
        self.assertEqual(self.run_command('significance', input_path=str(path)), EXIT_OK, self.stderr)
        table = pd.read_csv(self.out / 'significance.csv')
        self.assertEqual(len(table), 10)
        self.assertEqual(list(table.columns), ['pair', 'round_0', 'round_1'])
        lines = (self.out / 'significance.csv').read_text().splitlines()
        for line in lines[1:]:
            for p in line.split(',')[1:]:
                self.assertRegex(p, r'^\d\.\d{4}$')

    def test_single_strategy(self):
        path = self.out / 'input.csv'
        write_results_csv([ResultsRow('exp', 'Random', seed, 0, 0.5 + 0.01 * seed) for seed in range(3)], path)
        self.assertEqual(self.run_command('significance', input_path=str(path)), EXIT_OK, self.stderr)
        table = pd.read_csv(self.out / 'significance.csv')
        self.assertEqual(list(table.columns), ['pair'])
        self.assertEqual(len(table), 0)

    def test_default_input(self):
        self.write_results().rename(self.out / 'al.csv')
        self.assertEqual(self.run_command('significance'), EXIT_OK, self.stderr)

    def test_missing_input(self):
        self.assertEqual(self.run_command('significance', input_path=str(self.out / 'missing.csv')), EXIT_IO)

    def test_single_run(self):
        path = self.write_results(seeds=[0])
        self.assertEqual(self.run_command('significance', input_path=str(path)), EXIT_STATS)


class ExitCodes(unittest.TestCase):
    def test_mapping(self):
        self.assertEqual(exit_code(ShiftLabConfigError('x')), EXIT_CONFIG)
        self.assertEqual(exit_code(ShiftLabDimensionError('x')), EXIT_TRAINING)
        self.assertEqual(exit_code(ShiftLabBatchError('x')), EXIT_TRAINING)
        self.assertEqual(exit_code(FloatingPointError('x')), EXIT_TRAINING)
        self.assertEqual(exit_code(ShiftLabDataError('x')), EXIT_DATA)
        self.assertEqual(exit_code(ShiftLabPoolExhaustedError('x')), EXIT_DATA)
        self.assertEqual(exit_code(ShiftLabStatsError('x')), EXIT_STATS)
        self.assertEqual(exit_code(ShiftLabIOError('x')), EXIT_IO)
        self.assertEqual(exit_code(RuntimeError('x')), EXIT_UNEXPECTED)

    def test_distinct_and_documented(self):
        codes = [EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING, EXIT_STATS, EXIT_IO]
        self.assertEqual(len(set(codes)), len(codes))
        help_text = build_parser().format_help()
        for code in codes:
            self.assertRegex(help_text, r'\n  {}  '.format(code))


class Main(CliTestBase):
    def call(self, *argv) -> int:
        with contextlib.redirect_stderr(io.StringIO()) as stderr, contextlib.redirect_stdout(io.StringIO()):
            code = main(list(argv))
        self.stderr = stderr.getvalue()
        return code

    def test_train(self):
        config = self.out / 'experiment.cfg'
        config.write_text(TINY)
        self.assertEqual(self.call('train', '--config', str(config), '--out', str(self.out), '--seeds', '3'),
                         EXIT_OK, self.stderr)
        self.assertEqual(pd.read_csv(self.out / 'train.csv')['seed'].tolist(), [3])

    def test_invalid_config(self):
        config = self.out / 'experiment.cfg'
        config.write_text('train.lr = abc\n')
        self.assertEqual(self.call('train', '--config', str(config), '--out', str(self.out)), EXIT_CONFIG)
        self.assertIn('{key: "train.lr"}: "abc" cannot be converted to type float', self.stderr)

    def test_workers(self):
        self.assertEqual(self.call('train', '--workers', '0', '--out', str(self.out)), EXIT_CONFIG)

    def test_usage(self):
        for argv in (['fit'], ['train', '--seeds', '1,1']):
            with self.subTest(argv=argv):
                with self.assertRaises(SystemExit) as context:
                    self.call(*argv)
                self.assertEqual(context.exception.code, 2)

    def test_version(self):
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout), self.assertRaises(SystemExit) as context:
            main(['--version'])
        self.assertEqual(context.exception.code, 0)
        self.assertIn(__version__, stdout.getvalue())
