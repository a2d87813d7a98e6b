from django.core.management.base import BaseCommand, CommandError

from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Оценка обученных запусков по F-мере: eval.csv и сводная таблица'

    def add_arguments(self, parser):
        parser.add_argument('--runs', nargs='+', required=True,
                            help='Каталоги запусков или каталоги, содержащие запуски')
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--mode', choices=['max', 'mean', 'single'], default=None,
                            help='Агрегация по пользователям (по умолчанию aggregation_mode из конфигурации запуска)')
        parser.add_argument('--out', default=None, help='Путь к eval.csv (по умолчанию SUMSR_OUT/eval.csv)')
        parser.add_argument('--oracle', action='store_true',
                            help='Оценить на тесте все чекпоинты селектора и сравнить лучший с выбранным')

    def handle(self, *args, **options):
        result = SummarizationService().evaluate(options['runs'], options['manifest'],
                                                 options['mode'], options['out'], oracle=options['oracle'])
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        self.stdout.write(result['table'])
        self.stdout.write(self.style.SUCCESS(f"Результаты записаны в {result['eval_csv']}"))
        if result.get('oracle_csv'):
            self.stdout.write(self.style.SUCCESS(f"Сравнение с лучшим чекпоинтом: {result['oracle_csv']}"))
