from django.core.management.base import BaseCommand, CommandError

from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Создать случайные разбиения train/val/test для манифеста'

    def add_arguments(self, parser):
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--out', required=True, help='Путь к JSON-файлу разбиений')
        parser.add_argument('--n-splits', type=int, default=5)
        parser.add_argument('--test-fraction', type=float, default=0.2)
        parser.add_argument('--val-fraction', type=float, default=0.2)
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        result = SummarizationService().make_splits(
            options['manifest'], options['out'], options['n_splits'],
            options['test_fraction'], options['val_fraction'], options['seed'])
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        self.stdout.write(self.style.SUCCESS(f"Разбиений: {result['n_splits']} -> {result['path']}"))
