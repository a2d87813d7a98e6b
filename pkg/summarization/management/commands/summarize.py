import json

from django.core.management.base import BaseCommand, CommandError

from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Построить резюме одного видео и вывести его JSON'

    def add_arguments(self, parser):
        parser.add_argument('--model', required=True, help='Чекпоинт модели (.bin)')
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--video', required=True, help='video_id из манифеста')
        parser.add_argument('--alpha', type=float, default=0.15, help='Доля длины видео в резюме')

    def handle(self, *args, **options):
        result = SummarizationService().summarize(options['model'], options['manifest'],
                                                  options['video'], options['alpha'])
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        self.stdout.write(json.dumps(result['summary'], ensure_ascii=False, sort_keys=True))
