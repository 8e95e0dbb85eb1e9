from django.apps import AppConfig


class NeighborsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "neighbors"
    verbose_name = "Neighbor search"
