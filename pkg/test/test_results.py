import tempfile
import unittest
from pathlib import Path

from shiftlab.errors import ShiftLabIOError
from shiftlab.results import RESULTS_COLUMNS, ResultsRow, read_results_csv, write_results_csv


class ResultsCsv(unittest.TestCase):
    rows = [
        ResultsRow('exp', 'UADA', 1, 0, 0.5),
        ResultsRow('exp', 'SourceOnly', 0, 0, 0.25),
        ResultsRow('exp', 'UADA', 0, 1, 0.75),
        ResultsRow('exp', 'UADA', 0, 0, 1 / 3),
    ]

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_empty(self):
        path = self.dir / 'empty.csv'
        write_results_csv([], path)
        self.assertEqual(path.read_text(), 'experiment,mode,seed,round,mpca,seconds\n')

    def test_sorted_and_formatted(self):
        path = self.dir / 'results.csv'
        write_results_csv(self.rows, path)
        lines = path.read_text().splitlines()
        self.assertEqual(lines[1:], [
            'exp,SourceOnly,0,0,0.250000,0.000000',
            'exp,UADA,0,0,0.333333,0.000000',
            'exp,UADA,0,1,0.750000,0.000000',
            'exp,UADA,1,0,0.500000,0.000000',
        ])

    def test_insertion_order(self):
        first, second = self.dir / 'a.csv', self.dir / 'b.csv'
        write_results_csv(self.rows, first)
        write_results_csv(reversed(self.rows), second)
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_no_temporary_files_left(self):
        write_results_csv(self.rows, self.dir / 'results.csv')
        self.assertEqual([p.name for p in self.dir.iterdir()], ['results.csv'])

    def test_read(self):
        path = self.dir / 'results.csv'
        write_results_csv(self.rows, path)
        frame = read_results_csv(path)
        self.assertEqual(list(frame.columns), RESULTS_COLUMNS)
        self.assertEqual(len(frame), 4)

    def test_unwritable(self):
        blocker = self.dir / 'file'
        blocker.write_text('')
        with self.assertRaises(ShiftLabIOError):
            write_results_csv(self.rows, blocker / 'results.csv')
