from django.apps import AppConfig


class SummarizationConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'summarization'
    verbose_name = 'Суммаризация видео SUM-SR'
