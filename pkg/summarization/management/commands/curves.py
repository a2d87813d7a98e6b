from django.core.management.base import BaseCommand, CommandError

from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Кривые нормированных потерь выбора модели (CSV и SVG)'

    def add_arguments(self, parser):
        parser.add_argument('--run', required=True, help='Каталог запуска с selection.csv')

    def handle(self, *args, **options):
        result = SummarizationService().curves(options['run'])
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        self.stdout.write(self.style.SUCCESS(f"CSV: {result['csv']}"))
        for chart in result['charts']:
            self.stdout.write(f'График: {chart}')
