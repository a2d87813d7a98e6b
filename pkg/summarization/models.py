from django.db import models


class TrainingRun(models.Model):
    """Лог запуска обучения одного варианта на одном разбиении"""
    STATUS_CHOICES = [
        ('pending', 'В процессе'),
        ('success', 'Успешно'),
        ('error', 'Ошибка'),
    ]

    variant = models.CharField(max_length=20, verbose_name="Вариант")
    seed = models.IntegerField(verbose_name="Seed")
    split_id = models.IntegerField(default=0, verbose_name="Разбиение")
    run_dir = models.CharField(max_length=500, verbose_name="Каталог запуска")
    config = models.JSONField(default=dict, blank=True, verbose_name="Конфигурация")

    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending', verbose_name="Статус")
    selected_iteration = models.IntegerField(null=True, blank=True, verbose_name="Выбранная итерация")
    selected_epoch = models.IntegerField(null=True, blank=True, verbose_name="Выбранная эпоха")
    parameter_count = models.IntegerField(null=True, blank=True, verbose_name="Число параметров")
    training_seconds = models.FloatField(null=True, blank=True, verbose_name="Время обучения, с")
    error_details = models.TextField(blank=True, verbose_name="Детали ошибок")

    started_at = models.DateTimeField(auto_now_add=True, verbose_name="Начато")
    completed_at = models.DateTimeField(null=True, blank=True, verbose_name="Завершено")

    class Meta:
        verbose_name = "Запуск обучения"
        verbose_name_plural = "Запуски обучения"
        ordering = ['-started_at']

    def __str__(self):
        return f"Обучение {self.variant} seed={self.seed} split={self.split_id} - {self.get_status_display()}"


class EvaluationLog(models.Model):
    """Лог оценки набора запусков"""
    STATUS_CHOICES = [
        ('pending', 'В процессе'),
        ('success', 'Успешно'),
        ('error', 'Ошибка'),
    ]

    mode = models.CharField(max_length=20, verbose_name="Режим агрегации")
    runs = models.JSONField(default=list, blank=True, verbose_name="Каталоги запусков")
    total_runs = models.IntegerField(default=0, verbose_name="Всего запусков")
    evaluated_runs = models.IntegerField(default=0, verbose_name="Оценено запусков")
    n_rows = models.IntegerField(default=0, verbose_name="Строк в eval.csv")
    mean_fscore = models.FloatField(null=True, blank=True, verbose_name="Средняя F-мера")
    seed_std = models.FloatField(null=True, blank=True, verbose_name="Std по seed'ам")
    results = models.JSONField(default=dict, blank=True, verbose_name="Результаты")

    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending', verbose_name="Статус")
    error_details = models.TextField(blank=True, verbose_name="Детали ошибок")

    started_at = models.DateTimeField(auto_now_add=True, verbose_name="Начато")
    completed_at = models.DateTimeField(null=True, blank=True, verbose_name="Завершено")

    class Meta:
        verbose_name = "Лог оценки"
        verbose_name_plural = "Логи оценки"
        ordering = ['-started_at']

    def __str__(self):
        return f"Оценка {self.mode} - {self.status}"
