"""Configure Django for pytest, mirroring mvis/manage.py."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'mvis.settings')
django.setup()
