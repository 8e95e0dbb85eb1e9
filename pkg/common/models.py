from django.db import models
from django.utils.translation import gettext_lazy as _


class RunRecord(models.Model):

    class Kind(models.TextChoices):
        TRAIN = "train", _("TRAIN")
        SIMULATE = "simulate", _("SIMULATE")
        INFER = "infer", _("INFER")
        BENCH_NEIGHBORS = "bench-neighbors", _("BENCH NEIGHBORS")
        BENCH_MODEL = "bench-model", _("BENCH MODEL")
        SCAN_PRIOR = "scan-prior", _("SCAN PRIOR")

    class Status(models.TextChoices):
        RUNNING = "RUNNING", _("RUNNING")
        DONE = "DONE", _("DONE")
        FAILED = "FAILED", _("FAILED")

    kind = models.CharField(max_length=32, choices=Kind)
    status = models.CharField(max_length=16, choices=Status, default=Status.RUNNING)
    config = models.TextField(blank=True, default="")
    seed = models.BigIntegerField(null=True, blank=True)
    output = models.CharField(max_length=512, blank=True, default="")
    summary = models.JSONField(default=dict, blank=True)
    exit_code = models.IntegerField(null=True, blank=True)
    create_at = models.DateTimeField(auto_now_add=True)
    update_at = models.DateTimeField(auto_now=True)

    def __str__(self) -> str:
        return f"{self.kind} run ({self.pk})"

    @property
    def is_finished(self):
        return self.status != self.Status.RUNNING

    def set_log(self, message: str):
        RunLog.objects.create(run=self, message=message)

    @classmethod
    def start(cls, kind: Kind, config: str = "", seed: int | None = None, output: str = ""):
        record = cls.objects.create(kind=kind, config=config, seed=seed, output=output)
        record.set_log(f"start {kind}")
        return record

    def finish(self, summary: dict | None = None):
        self.status = self.Status.DONE
        self.exit_code = 0
        self.summary = summary or {}
        self.set_log("done")
        self.save()

    def fail(self, message: str, exit_code: int):
        self.status = self.Status.FAILED
        self.exit_code = exit_code
        self.set_log(message)
        self.save()


class RunLog(models.Model):
    run = models.ForeignKey(RunRecord, on_delete=models.CASCADE, related_name="log")
    message = models.CharField(max_length=1024, null=True, blank=True)
    create_at = models.DateTimeField(auto_now_add=True)
