"""
URL configuration for the nnpkit project.

Only the Django admin is served; it is used to browse run records
(training runs, simulations, benchmarks) written by the management commands.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path("admin/", admin.site.urls),
]
