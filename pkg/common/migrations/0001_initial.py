import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('train', 'TRAIN'), ('simulate', 'SIMULATE'), ('infer', 'INFER'), ('bench-neighbors', 'BENCH NEIGHBORS'), ('bench-model', 'BENCH MODEL'), ('scan-prior', 'SCAN PRIOR')], max_length=32)),
                ('status', models.CharField(choices=[('RUNNING', 'RUNNING'), ('DONE', 'DONE'), ('FAILED', 'FAILED')], default='RUNNING', max_length=16)),
                ('config', models.TextField(blank=True, default='')),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('output', models.CharField(blank=True, default='', max_length=512)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('exit_code', models.IntegerField(blank=True, null=True)),
                ('create_at', models.DateTimeField(auto_now_add=True)),
                ('update_at', models.DateTimeField(auto_now=True)),
            ],
        ),
        migrations.CreateModel(
            name='RunLog',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('message', models.CharField(blank=True, max_length=1024, null=True)),
                ('create_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='log', to='common.runrecord')),
            ],
        ),
    ]
