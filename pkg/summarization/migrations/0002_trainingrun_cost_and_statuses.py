from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('summarization', '0001_initial'),
    ]

    operations = [
        migrations.AddField(
            model_name='trainingrun',
            name='parameter_count',
            field=models.IntegerField(blank=True, null=True, verbose_name='Число параметров'),
        ),
        migrations.AddField(
            model_name='trainingrun',
            name='training_seconds',
            field=models.FloatField(blank=True, null=True, verbose_name='Время обучения, с'),
        ),
        migrations.AlterField(
            model_name='trainingrun',
            name='status',
            field=models.CharField(choices=[('pending', 'В процессе'), ('success', 'Успешно'), ('error', 'Ошибка')], default='pending', max_length=20, verbose_name='Статус'),
        ),
        migrations.AlterField(
            model_name='evaluationlog',
            name='status',
            field=models.CharField(choices=[('pending', 'В процессе'), ('success', 'Успешно'), ('error', 'Ошибка')], default='pending', max_length=20, verbose_name='Статус'),
        ),
    ]
