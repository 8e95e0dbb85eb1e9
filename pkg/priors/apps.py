from django.apps import AppConfig


class PriorsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "priors"
    verbose_name = "Physical priors"
