import math

from django.db import models

from .reports import ResultRecord, format_number


class Experiment(models.Model):
    """One named run of a protocol over one dataset and model configuration"""
    class Kind(models.TextChoices):
        RQ1 = 'rq1', 'Seed instability'
        SWEEP = 'sweep', 'Perturbation sweep'

    name = models.CharField(max_length=200)
    kind = models.CharField(max_length=10, choices=Kind.choices, default=Kind.SWEEP)
    dataset = models.CharField(max_length=100)
    model_kind = models.CharField(max_length=30)
    config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']
        unique_together = ['name', 'kind']

    def __str__(self):
        return f"{self.name} ({self.get_kind_display()})"

    def records(self):
        """Result rows in storage order, ready for reporting"""
        rows = self.results.order_by('cell__id', 'position')
        return [row.as_record() for row in rows]


class SweepCell(models.Model):
    """One (scenario, n, seed) job of an experiment"""
    class Status(models.TextChoices):
        PENDING = 'pending', 'Pending'
        DONE = 'done', 'Done'
        FAILED = 'failed', 'Failed'

    experiment = models.ForeignKey(Experiment, on_delete=models.CASCADE, related_name='cells')
    scenario = models.CharField(max_length=20)
    n = models.PositiveSmallIntegerField()
    seed = models.IntegerField()
    status = models.CharField(max_length=10, choices=Status.choices, default=Status.PENDING)
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['id']
        unique_together = ['experiment', 'scenario', 'n', 'seed']

    def __str__(self):
        return f"{self.scenario} n={self.n} seed={self.seed}"


class ResultRow(models.Model):
    experiment = models.ForeignKey(Experiment, on_delete=models.CASCADE, related_name='results')
    cell = models.ForeignKey(SweepCell, on_delete=models.CASCADE, related_name='results')
    dataset = models.CharField(max_length=100)
    model = models.CharField(max_length=30)
    scenario = models.CharField(max_length=20)
    n = models.PositiveSmallIntegerField()
    seed = models.IntegerField()
    metric = models.CharField(max_length=60)
    # NaN (a variation against a zero baseline) is stored as NULL
    value = models.FloatField(null=True)
    p_value = models.FloatField(null=True, blank=True)
    significant = models.BooleanField(null=True, blank=True)
    position = models.PositiveIntegerField(default=0)

    class Meta:
        ordering = ['cell_id', 'position']
        unique_together = ['experiment', 'dataset', 'model', 'scenario', 'n', 'seed', 'metric']

    def __str__(self):
        return f"{self.metric} {self.scenario} n={self.n} seed={self.seed}: {format_number(self.value)}"

    @classmethod
    def from_record(cls, record, experiment, cell, position):
        return cls(
            experiment=experiment,
            cell=cell,
            dataset=record.dataset,
            model=record.model,
            scenario=record.scenario,
            n=record.n,
            seed=record.seed,
            metric=record.metric,
            value=None if math.isnan(record.value) else record.value,
            p_value=record.p_value,
            significant=record.significant,
            position=position,
        )

    def as_record(self):
        return ResultRecord(
            dataset=self.dataset,
            model=self.model,
            scenario=self.scenario,
            n=self.n,
            seed=self.seed,
            metric=self.metric,
            value=math.nan if self.value is None else self.value,
            p_value=self.p_value,
            significant=self.significant,
        )
