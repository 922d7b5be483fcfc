import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'nonsqueeze_project.settings')
django.setup()
