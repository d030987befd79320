from django.db import models
import uuid


class EvaluationRun(models.Model):
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    benchmark = models.CharField(max_length=20, help_text="Benchmark the network was trained on")
    test_benchmark = models.CharField(max_length=20, help_text="Benchmark whose test split was scored")
    stage = models.CharField(max_length=30)
    checkpoint = models.CharField(max_length=500)
    test_size = models.PositiveIntegerField(default=0)
    overall_rho = models.FloatField(null=True, blank=True)
    p_value = models.FloatField(null=True, blank=True)
    target_correlations = models.JSONField(default=dict)
    prediction_min = models.FloatField(null=True, blank=True)
    prediction_max = models.FloatField(null=True, blank=True)
    report_path = models.CharField(max_length=500, blank=True, default="")
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]
        verbose_name = "Evaluation Run"
        verbose_name_plural = "Evaluation Runs"

    def __str__(self):
        return f"{self.benchmark} -> {self.test_benchmark} [{self.stage}] rho={self.overall_rho_display}"

    @property
    def is_cross_dataset(self):
        return self.benchmark != self.test_benchmark

    @property
    def overall_rho_display(self):
        return "-" if self.overall_rho is None else f"{self.overall_rho:.4f}"

    @classmethod
    def from_report(cls, report, checkpoint, trained_on, stage=None, report_path=""):
        """Store the final column of an evaluation report."""
        stage = stage or report.final_column
        correlations = report.columns.get(stage, {})
        return cls.objects.create(
            benchmark=trained_on,
            test_benchmark=report.benchmark,
            stage=stage,
            checkpoint=str(checkpoint),
            test_size=report.test_size,
            overall_rho=correlations.get("overall"),
            p_value=report.p_values.get(stage),
            target_correlations=correlations,
            prediction_min=report.prediction_range[0],
            prediction_max=report.prediction_range[1],
            report_path=str(report_path or ""),
        )
