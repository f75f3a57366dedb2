"""
WSGI config for the kernel attention lab (serves the run-ledger admin).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'kernel_attention.settings')

application = get_wsgi_application()
