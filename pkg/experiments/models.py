from django.db import models

from core.models import TimeStampedModel


class ExperimentRun(TimeStampedModel):
    """Ledger entry for one experiment command invocation"""
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('passed', 'Passed'),
        ('failed', 'Failed'),
        ('error', 'Error'),
    ]

    command = models.CharField(max_length=50)
    seed = models.IntegerField()
    config_hash = models.CharField(max_length=64)
    config_source = models.CharField(max_length=500, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    output_dir = models.CharField(max_length=500)
    summary = models.JSONField(default=dict, blank=True)
    message = models.TextField(blank=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['command', 'status'], name='experiments_command_status_idx'),
        ]

    def __str__(self):
        return f"{self.command} seed={self.seed} ({self.status})"

    def finish(self, status, summary=None, message=''):
        self.status = status
        self.summary = summary or {}
        self.message = message
        self.save(update_fields=['status', 'summary', 'message', 'updated_at'])
