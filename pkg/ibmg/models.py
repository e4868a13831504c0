from typing import List

from django.db import models
from django.utils.translation import gettext_lazy as _

from ibmg.settings import IBMG_N_REPORTS_KEPT


class Experiment(models.Model):
    """A parameter sweep read from one experiment config file."""

    STATUS_PENDING = "pending"
    STATUS_RUNNING = "running"
    STATUS_DONE = "done"
    STATUS_CHOICES = (
        (STATUS_PENDING, _("PENDING")),
        (STATUS_RUNNING, _("RUNNING")),
        (STATUS_DONE, _("DONE")),
    )

    name = models.CharField(max_length=255, blank=True)
    config_text = models.TextField(blank=True)
    output_dir = models.CharField(max_length=1024)
    created_at = models.DateTimeField(auto_now_add=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_PENDING)

    @classmethod
    def prune(cls, n: int = IBMG_N_REPORTS_KEPT):
        """Delete all experiments except the latest `n`; `n = 0` keeps everything."""
        if n:
            last_n_ids = cls.objects.order_by("-id")[:n].values_list("id", flat=True)
            cls.objects.exclude(pk__in=list(last_n_ids)).delete()

    @property
    def n_runs(self) -> int:
        return self.runs.count()

    @property
    def n_runs_done(self) -> int:
        return self.runs.filter(status=SolveRun.STATUS_DONE).count()

    def refresh_status(self):
        """Mark the experiment done once every sweep point has finished."""
        if self.n_runs and self.n_runs_done == self.n_runs:
            self.status = self.STATUS_DONE
            self.save(update_fields=["status"])

    def __str__(self):
        """Return the string representation of the experiment."""
        return f"{self.name or 'experiment'} #{self.id} ({self.status})"

    class Meta:
        """Django model options."""

        ordering = ["-id"]
        verbose_name = _("Experiment")
        verbose_name_plural = _("Experiments")


class SolveRun(models.Model):
    """One sweep point: a semi-implicit step solved with one smoother configuration."""

    STATUS_PENDING = "pending"
    STATUS_STARTED = "started"
    STATUS_DONE = "done"
    STATUS_CHOICES = (
        (STATUS_PENDING, _("PENDING")),
        (STATUS_STARTED, _("STARTED")),
        (STATUS_DONE, _("DONE")),
    )

    RESULT_NO = ""
    RESULT_OK = "ok"
    RESULT_FAILED = "failed"
    RESULT_ERRORS = "errors"
    RESULT_WARNINGS = "warnings"
    RESULT_NOT_CONVERGED = "not_converged"
    RESULT_CHOICES = (
        (RESULT_NO, "---"),
        (RESULT_OK, "OK"),
        (RESULT_FAILED, "FAILED"),
        (RESULT_ERRORS, "ERRORS"),
        (RESULT_WARNINGS, "WARNINGS"),
        (RESULT_NOT_CONVERGED, "NOT CONVERGED"),
    )

    experiment = models.ForeignKey(Experiment, on_delete=models.CASCADE, related_name="runs")
    sweep_index = models.PositiveIntegerField()
    config = models.JSONField(default=dict)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_PENDING)
    result = models.CharField(max_length=20, choices=RESULT_CHOICES, default=RESULT_NO)
    iterations = models.PositiveIntegerField(default=0)
    converged = models.BooleanField(default=False)
    final_relres = models.FloatField(null=True, blank=True)
    wall_time = models.FloatField(default=0.0)
    job_id = models.CharField(max_length=255, null=True, blank=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    def residual_history(self) -> List[float]:
        """Relative residuals, starting with the initial one (1.0)."""
        return list(self.residuals.order_by("iteration").values_list("relres", flat=True))

    def get_log_lines(self) -> List[str]:
        return [f"{log.timestamp} - {log.level} - {log.message}" for log in self.logs.all()]

    def log_tail(self, n_lines=10):
        """Return the last lines of the logs of a run."""
        logs = self.logs.order_by("-id")[:n_lines]
        hidden_lines = self.logs.count() - n_lines
        report_lines = []
        if hidden_lines > 0:
            report_lines.append(f"{hidden_lines} lines hidden ...")
        for log in reversed(logs):
            report_lines.append(f"{log.timestamp} - {log.level} - {log.message}")
        return "\n".join(report_lines)

    @property
    def n_log_lines(self):
        """Return the number of log lines for this run."""
        return self.logs.count()

    @property
    def n_log_errors(self):
        """Return the number of errors logged by this run."""
        return self.logs.filter(level="ERROR").count()

    @property
    def n_log_warnings(self):
        """Return the number of warnings logged by this run."""
        return self.logs.filter(level="WARNING").count()

    def compute_result(self) -> str:
        """Refine the outcome of a finished, non-failed run from its log and convergence."""
        if self.result == self.RESULT_FAILED:
            return self.result
        if self.n_log_errors:
            return self.RESULT_ERRORS
        if not self.converged:
            return self.RESULT_NOT_CONVERGED
        if self.n_log_warnings:
            return self.RESULT_WARNINGS
        return self.RESULT_OK

    def __str__(self):
        """Return the string representation of the run."""
        return f"run {self.sweep_index} of experiment {self.experiment_id} ({self.result or self.status})"

    class Meta:
        """Django model options."""

        ordering = ["experiment", "sweep_index"]
        constraints = [
            models.UniqueConstraint(fields=["experiment", "sweep_index"], name="ibmg_unique_sweep_point"),
        ]
        verbose_name = _("Solve run")
        verbose_name_plural = _("Solve runs")


class ResidualEntry(models.Model):
    """Relative residual after one outer iteration."""

    run = models.ForeignKey(SolveRun, on_delete=models.CASCADE, related_name="residuals")
    iteration = models.PositiveIntegerField()
    relres = models.FloatField()

    class Meta:
        ordering = ["run", "iteration"]

    def __str__(self):
        return f"{self.run_id}:{self.iteration} {self.relres:.3e}"


class RunLog(models.Model):
    """The log generated by a run."""

    run = models.ForeignKey(SolveRun, on_delete=models.CASCADE, related_name="logs")
    timestamp = models.DateTimeField(auto_now_add=True)
    level = models.CharField(max_length=10)
    message = models.TextField()

    class Meta:
        ordering = ["id"]

    def __str__(self):
        return f"Log {self.id}: {self.level} at {self.timestamp}"
