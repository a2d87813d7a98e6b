from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='EvaluationLog',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('mode', models.CharField(max_length=20, verbose_name='Режим агрегации')),
                ('runs', models.JSONField(blank=True, default=list, verbose_name='Каталоги запусков')),
                ('total_runs', models.IntegerField(default=0, verbose_name='Всего запусков')),
                ('evaluated_runs', models.IntegerField(default=0, verbose_name='Оценено запусков')),
                ('n_rows', models.IntegerField(default=0, verbose_name='Строк в eval.csv')),
                ('mean_fscore', models.FloatField(blank=True, null=True, verbose_name='Средняя F-мера')),
                ('seed_std', models.FloatField(blank=True, null=True, verbose_name="Std по seed'ам")),
                ('results', models.JSONField(blank=True, default=dict, verbose_name='Результаты')),
                ('status', models.CharField(choices=[('pending', 'В процессе'), ('success', 'Успешно'), ('error', 'Ошибка'), ('partial', 'Частично успешно')], default='pending', max_length=20, verbose_name='Статус')),
                ('error_details', models.TextField(blank=True, verbose_name='Детали ошибок')),
                ('started_at', models.DateTimeField(auto_now_add=True, verbose_name='Начато')),
                ('completed_at', models.DateTimeField(blank=True, null=True, verbose_name='Завершено')),
            ],
            options={
                'verbose_name': 'Лог оценки',
                'verbose_name_plural': 'Логи оценки',
                'ordering': ['-started_at'],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('variant', models.CharField(max_length=20, verbose_name='Вариант')),
                ('seed', models.IntegerField(verbose_name='Seed')),
                ('split_id', models.IntegerField(default=0, verbose_name='Разбиение')),
                ('run_dir', models.CharField(max_length=500, verbose_name='Каталог запуска')),
                ('config', models.JSONField(blank=True, default=dict, verbose_name='Конфигурация')),
                ('status', models.CharField(choices=[('pending', 'В процессе'), ('success', 'Успешно'), ('error', 'Ошибка'), ('partial', 'Частично успешно')], default='pending', max_length=20, verbose_name='Статус')),
                ('selected_iteration', models.IntegerField(blank=True, null=True, verbose_name='Выбранная итерация')),
                ('selected_epoch', models.IntegerField(blank=True, null=True, verbose_name='Выбранная эпоха')),
                ('error_details', models.TextField(blank=True, verbose_name='Детали ошибок')),
                ('started_at', models.DateTimeField(auto_now_add=True, verbose_name='Начато')),
                ('completed_at', models.DateTimeField(blank=True, null=True, verbose_name='Завершено')),
            ],
            options={
                'verbose_name': 'Запуск обучения',
                'verbose_name_plural': 'Запуски обучения',
                'ordering': ['-started_at'],
            },
        ),
    ]
