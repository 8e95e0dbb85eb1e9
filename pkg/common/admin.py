from django.contrib import admin
from common.models import RunLog, RunRecord


admin.site.register(
    RunRecord, list_display=["id", "kind", "status", "seed", "exit_code", "create_at"]
)
admin.site.register(RunLog, list_display=["id", "run", "message", "create_at"])
