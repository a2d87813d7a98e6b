import json
import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, override_settings

from summarization.exceptions import ConfigurationError
from summarization.run_config import RunConfig, TrainingConfig, load_run_config, parse_run_config


class TrainingConfigTest(SimpleTestCase):
    def test_defaults(self):
        config = TrainingConfig()
        self.assertEqual(config.variant, 'iter')
        self.assertEqual(config.iterations, 5)
        self.assertEqual((config.sigma, config.tau, config.alpha), (0.7, 0.5, 0.15))
        self.assertEqual((config.d, config.d_h), (1024, 512))
        self.assertEqual(config.learning_rate, 1e-4)
        self.assertEqual(config.clip_value, 5.0)
        self.assertEqual(config.mask_stage_epochs, config.epochs_per_stage)

    def test_single_iteration_for_other_variants(self):
        self.assertEqual(TrainingConfig(variant='sepMa').iterations, 1)
        with self.assertRaises(ConfigurationError):
            TrainingConfig(variant='sep', iterations=3)

    def test_unknown_variant(self):
        with self.assertRaises(ConfigurationError) as ctx:
            TrainingConfig(variant='gan')
        self.assertIn('variant=', ctx.exception.message)

    def test_out_of_range_values(self):
        for bad in ({'sigma': 1.0}, {'alpha': 0.0}, {'tau': 0.0}, {'d_h': 5}, {'grad_clip': [-1.0, 5.0]},
                    {'epochs_per_stage': 0}, {'dtype': 'float16'}):
            with self.assertRaises(ConfigurationError, msg=str(bad)):
                TrainingConfig(**bad)


class RunConfigParsingTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.base = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_unknown_key_reports_line(self):
        text = '{\n  "variant": "sep",\n  "bogus": 1,\n  "manifest": "m.json",\n  "split_file": "s.json"\n}'
        with self.assertRaises(ConfigurationError) as ctx:
            parse_run_config(text)
        self.assertIn("'bogus'", ctx.exception.message)
        self.assertIn('строка 3', ctx.exception.message)

    def test_wrong_type(self):
        text = json.dumps({'variant': 'sep', 'epochs_per_stage': '10', 'manifest': 'm', 'split_file': 's'})
        with self.assertRaises(ConfigurationError):
            parse_run_config(text)

    def test_boolean_is_not_integer(self):
        text = json.dumps({'variant': 'sep', 'seed': True, 'manifest': 'm', 'split_file': 's'})
        with self.assertRaises(ConfigurationError):
            parse_run_config(text)

    def test_range_error_reports_line(self):
        text = '{\n  "manifest": "m",\n  "split_file": "s",\n  "sigma": 1.5\n}'
        with self.assertRaises(ConfigurationError) as ctx:
            parse_run_config(text)
        self.assertIn('строка 4', ctx.exception.message)

    def test_relative_paths_resolved_against_config_directory(self):
        path = self.base / 'cfg' / 'run.json'
        path.parent.mkdir()
        path.write_text(json.dumps({'variant': 'sep', 'manifest': '../data/manifest.json',
                                    'split_file': 'splits.json', 'output_dir': 'out'}), encoding='utf-8')
        config = load_run_config(path)
        self.assertEqual(Path(config.manifest), (self.base / 'data' / 'manifest.json').resolve())
        self.assertEqual(Path(config.split_file), (path.parent / 'splits.json').resolve())
        self.assertEqual(Path(config.output_dir), (path.parent / 'out').resolve())

    def test_overrides(self):
        text = json.dumps({'variant': 'iter', 'sigma': 0.7, 'manifest': 'm', 'split_file': 's'})
        config = parse_run_config(text, overrides={'seed': 4, 'sigma': 0.3, 'split_indices': None})
        self.assertEqual((config.seed, config.sigma), (4, 0.3))
        self.assertIsNone(config.split_indices)

    @override_settings(SUMSR_OUT=Path('/tmp/sumsr-test-out'))
    def test_output_dir_defaults_to_settings(self):
        config = RunConfig(variant='sep', manifest='m', split_file='s')
        self.assertEqual(config.output_dir, str(settings.SUMSR_OUT))

    def test_missing_required_paths(self):
        with self.assertRaises(ConfigurationError):
            parse_run_config(json.dumps({'variant': 'sep', 'split_file': 's'}))

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_run_config(self.base / 'absent.json')

    def test_invalid_json(self):
        with self.assertRaises(ConfigurationError):
            parse_run_config('{"variant": }')
