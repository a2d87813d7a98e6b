"""
Django settings для sumsr_service (локальная разработка).

Общие настройки находятся в base.py, здесь только то, что отличается
для рабочей машины разработчика.

Для получения дополнительной информации об этом файле см.
https://docs.djangoproject.com/en/4.2/topics/settings/
"""

from .base import *  # noqa: F401,F403

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = True
