"""Configure Django for plain pytest runs (mirrors manage.py's default settings)."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'haarboost_project.settings.dev')
django.setup()
