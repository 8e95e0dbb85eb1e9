"""
WSGI entry point for the run-record admin.

Serves ``core.urls`` (the Django admin over ``common.models.RunRecord``)
with any WSGI server, e.g. ``gunicorn core.wsgi``.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")

application = get_wsgi_application()
