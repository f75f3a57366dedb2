from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ['command', 'seed', 'status', 'config_hash', 'created_at']
    list_filter = ['command', 'status', 'created_at']
    search_fields = ['command', 'config_hash', 'output_dir']
    readonly_fields = ['created_at', 'updated_at']
    ordering = ['-created_at']
