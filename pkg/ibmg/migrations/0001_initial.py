# Generated by Django 5.1.4 on 2026-10-19 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Experiment',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(blank=True, max_length=255)),
                ('config_text', models.TextField(blank=True)),
                ('output_dir', models.CharField(max_length=1024)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('status', models.CharField(choices=[('pending', 'PENDING'), ('running', 'RUNNING'), ('done', 'DONE')], default='pending', max_length=20)),
            ],
            options={
                'verbose_name': 'Experiment',
                'verbose_name_plural': 'Experiments',
                'ordering': ['-id'],
            },
        ),
        migrations.CreateModel(
            name='SolveRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('sweep_index', models.PositiveIntegerField()),
                ('config', models.JSONField(default=dict)),
                ('status', models.CharField(choices=[('pending', 'PENDING'), ('started', 'STARTED'), ('done', 'DONE')], default='pending', max_length=20)),
                ('result', models.CharField(choices=[('', '---'), ('ok', 'OK'), ('failed', 'FAILED'), ('errors', 'ERRORS'), ('warnings', 'WARNINGS'), ('not_converged', 'NOT CONVERGED')], default='', max_length=20)),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('converged', models.BooleanField(default=False)),
                ('final_relres', models.FloatField(blank=True, null=True)),
                ('wall_time', models.FloatField(default=0.0)),
                ('job_id', models.CharField(blank=True, max_length=255, null=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='runs', to='ibmg.experiment')),
            ],
            options={
                'verbose_name': 'Solve run',
                'verbose_name_plural': 'Solve runs',
                'ordering': ['experiment', 'sweep_index'],
            },
        ),
        migrations.CreateModel(
            name='ResidualEntry',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('iteration', models.PositiveIntegerField()),
                ('relres', models.FloatField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='residuals', to='ibmg.solverun')),
            ],
            options={
                'ordering': ['run', 'iteration'],
            },
        ),
        migrations.CreateModel(
            name='RunLog',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('timestamp', models.DateTimeField(auto_now_add=True)),
                ('level', models.CharField(max_length=10)),
                ('message', models.TextField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='logs', to='ibmg.solverun')),
            ],
            options={
                'ordering': ['id'],
            },
        ),
        migrations.AddConstraint(
            model_name='solverun',
            constraint=models.UniqueConstraint(fields=('experiment', 'sweep_index'), name='ibmg_unique_sweep_point'),
        ),
    ]
