import argparse
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from summarization.dataset_io import load_splits
from summarization.exceptions import SumSRError
from summarization.run_config import load_run_config
from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Обучение варианта SUM-SR на разбиениях из конфигурации'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Путь к JSON-конфигурации запуска')
        parser.add_argument('--seed', type=int, required=True, help='Seed обучения (обязателен)')
        parser.add_argument('--jobs', type=int, default=1,
                            help='Число параллельных дочерних процессов по разбиениям')
        parser.add_argument('--sigma', type=float, default=None, help='Переопределить σ из конфигурации')
        # используется дочерними процессами --jobs
        parser.add_argument('--split', type=int, default=None, help=argparse.SUPPRESS)

    def handle(self, *args, **options):
        overrides = {'seed': options['seed'], 'sigma': options['sigma']}
        if options['split'] is not None:
            overrides['split_indices'] = [options['split']]
        try:
            config = load_run_config(options['config'], overrides)
        except SumSRError as e:
            raise CommandError(e.as_line())

        if options['jobs'] > 1 and options['split'] is None:
            self._run_parallel(config, options)
            return

        result = SummarizationService().train(config)
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        for run in result['runs']:
            self.stdout.write(self.style.SUCCESS(
                f"Разбиение {run['split_id']}: итерация {run['iteration']}, эпоха {run['epoch']} -> {run['run_dir']}"
            ))

    def _run_parallel(self, config, options):
        """Каждое разбиение обучается в отдельном дочернем процессе manage.py train --split k"""
        try:
            n_splits = len(load_splits(config.split_file))
        except SumSRError as e:
            raise CommandError(e.as_line())
        indices = config.split_indices if config.split_indices is not None else list(range(n_splits))

        def run_child(idx):
            command = [sys.executable, str(settings.BASE_DIR / 'manage.py'), 'train',
                       '--config', options['config'], '--seed', str(options['seed']), '--split', str(idx)]
            if options['sigma'] is not None:
                command += ['--sigma', repr(options['sigma'])]
            return idx, subprocess.run(command, capture_output=True, text=True)

        with ThreadPoolExecutor(max_workers=options['jobs']) as pool:
            results = list(pool.map(run_child, indices))

        failed = []
        for idx, completed in results:
            if completed.returncode == 0:
                self.stdout.write(completed.stdout.strip())
            else:
                lines = completed.stderr.strip().splitlines()
                failed.append(f"разбиение {idx}: {lines[-1] if lines else completed.returncode}")
        if failed:
            raise CommandError(f"[E_TRAINING] {'; '.join(failed)}")
