import pathlib
import unittest
from contextlib import redirect_stdout
from io import StringIO

from shiftlab import parse_config
from shiftlab.active_learning import StrategyKind

examples = (pathlib.Path(__file__) / '../../example').resolve()


class Example(unittest.TestCase):
    def run_example(self, name: str):
        """
        Checks that the text printed out by name.py is the same as the text in name.txt
        """
        code_path = examples / (name + '.py')
        stdout = StringIO()
        with code_path.open() as code_file, (examples / (name + '.txt')).open() as result_file, \
                redirect_stdout(stdout):
            code = compile(code_file.read(), str(code_path), 'exec')
            exec(code, {})
            self.assertEqual(stdout.getvalue(), result_file.read())

    def test_example(self):
        self.run_example('example')

    def test_ttest(self):
        self.run_example('ttest')

    def test_experiment_config(self):
        cfg = parse_config(examples / 'experiment.cfg')
        self.assertEqual(cfg.name, 'rotated-gaussians')
        self.assertEqual(cfg.strategies, tuple(StrategyKind))
        self.assertEqual(cfg.reach_mpca, 0.8)
