from django.core.management.base import BaseCommand, CommandError

from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Импорт датасета из HDF5 (одна группа на видео) в формат контейнера'

    def add_arguments(self, parser):
        parser.add_argument('--h5', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--mode', choices=['max', 'mean', 'single'], default='mean')

    def handle(self, *args, **options):
        result = SummarizationService().import_h5(options['h5'], options['out'], options['mode'])
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        self.stdout.write(self.style.SUCCESS(f"Манифест: {result['manifest']}"))
