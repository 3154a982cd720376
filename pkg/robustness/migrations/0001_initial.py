# Generated by Django 6.0.1 on 2026-10-16 09:12

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
                ('name', models.CharField(max_length=200)),
                ('kind', models.CharField(choices=[('rq1', 'Seed instability'), ('sweep', 'Perturbation sweep')], default='sweep', max_length=10)),
                ('dataset', models.CharField(max_length=100)),
                ('model_kind', models.CharField(max_length=30)),
                ('config', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'unique_together': {('name', 'kind')},
            },
        ),
        migrations.CreateModel(
            name='SweepCell',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scenario', models.CharField(max_length=20)),
                ('n', models.PositiveSmallIntegerField()),
                ('seed', models.IntegerField()),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('done', 'Done'), ('failed', 'Failed')], default='pending', max_length=10)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='cells', to='robustness.experiment')),
            ],
            options={
                'ordering': ['id'],
                'unique_together': {('experiment', 'scenario', 'n', 'seed')},
            },
        ),
        migrations.CreateModel(
            name='ResultRow',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('dataset', models.CharField(max_length=100)),
                ('model', models.CharField(max_length=30)),
                ('scenario', models.CharField(max_length=20)),
                ('n', models.PositiveSmallIntegerField()),
                ('seed', models.IntegerField()),
                ('metric', models.CharField(max_length=60)),
                ('value', models.FloatField(null=True)),
                ('p_value', models.FloatField(blank=True, null=True)),
                ('significant', models.BooleanField(blank=True, null=True)),
                ('position', models.PositiveIntegerField(default=0)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='robustness.experiment')),
                ('cell', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='robustness.sweepcell')),
            ],
            options={
                'ordering': ['cell_id', 'position'],
                'unique_together': {('experiment', 'dataset', 'model', 'scenario', 'n', 'seed', 'metric')},
            },
        ),
    ]
