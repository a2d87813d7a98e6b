import csv
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from summarization.exceptions import LookupFailure
from summarization.reporting import CURVE_COLUMNS, load_curves, write_curves
from summarization.selection import ValidationRecord, write_selection_csv


class CurvesTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name)
        blocks = [
            (1, ValidationRecord.from_means([0.1, 0.5, 0.9], [0.9, 0.5, 0.0]), 3),
            (2, ValidationRecord.from_means([2.0, 1.0, 3.0], [0.3, 0.2, 0.1]), 3),
        ]
        write_selection_csv(self.run_dir / 'selection.csv', blocks, selected_iteration=1)

    def tearDown(self):
        self.tmp.cleanup()

    def test_three_series_per_iteration(self):
        curves = load_curves(self.run_dir)
        self.assertEqual(list(curves), [1, 2])
        self.assertEqual([r['epoch'] for r in curves[1]], [1, 2, 3])
        self.assertAlmostEqual(curves[1][2]['difference'], 1.0)

    def test_writes_csv_and_charts(self):
        csv_path, charts = write_curves(self.run_dir)
        with open(csv_path, newline='', encoding='utf-8') as fh:
            rows = list(csv.DictReader(fh))
        self.assertEqual(list(rows[0]), CURVE_COLUMNS)
        self.assertEqual(len(rows), 6)
        self.assertEqual([c.name for c in charts], ['iter1.svg', 'iter2.svg'])
        self.assertIn('<svg', charts[0].read_text(encoding='utf-8'))

    def test_regeneration_is_byte_identical(self):
        _, first = write_curves(self.run_dir)
        content = first[0].read_bytes()
        _, second = write_curves(self.run_dir)
        self.assertEqual(second[0].read_bytes(), content)

    def test_missing_selection(self):
        with tempfile.TemporaryDirectory() as empty:
            with self.assertRaises(LookupFailure):
                load_curves(empty)
