from django.db import migrations, models
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('benchmark', models.CharField(help_text='Benchmark the network was trained on', max_length=20)),
                ('test_benchmark', models.CharField(help_text='Benchmark whose test split was scored', max_length=20)),
                ('stage', models.CharField(max_length=30)),
                ('checkpoint', models.CharField(max_length=500)),
                ('test_size', models.PositiveIntegerField(default=0)),
                ('overall_rho', models.FloatField(blank=True, null=True)),
                ('p_value', models.FloatField(blank=True, null=True)),
                ('target_correlations', models.JSONField(default=dict)),
                ('prediction_min', models.FloatField(blank=True, null=True)),
                ('prediction_max', models.FloatField(blank=True, null=True)),
                ('report_path', models.CharField(blank=True, default='', max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Evaluation Run',
                'verbose_name_plural': 'Evaluation Runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
