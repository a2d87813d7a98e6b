from django.core.management.base import BaseCommand, CommandError

from summarization.services import SummarizationService


class Command(BaseCommand):
    help = 'Сгенерировать синтетический датасет с заложенными событиями'

    def add_arguments(self, parser):
        parser.add_argument('--out', required=True, help='Каталог нового датасета')
        parser.add_argument('--videos', type=int, default=20)
        parser.add_argument('--frames', type=int, default=120)
        parser.add_argument('--dim', type=int, default=32)
        parser.add_argument('--events', type=int, default=3)
        parser.add_argument('--noise', type=float, default=0.1)
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        result = SummarizationService().synth_dataset(
            options['out'], n_videos=options['videos'], n=options['frames'], d=options['dim'],
            n_events=options['events'], noise_scale=options['noise'], seed=options['seed'])
        if not result['success']:
            raise CommandError(f"[{result['error_code']}] {result['error']}")
        self.stdout.write(self.style.SUCCESS(f"Видео: {result['n_videos']} -> {result['manifest']}"))
