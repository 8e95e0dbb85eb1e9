from django.apps import AppConfig


class StructureConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "structure"
    verbose_name = "Atomic systems"
