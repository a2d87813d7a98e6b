"""
Base settings для SUM-SR Video Summarization Service
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=True, cast=bool)

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'summarization',
]

# Database
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
        # Параллельные процессы обучения (--jobs) пишут в одну базу
        'OPTIONS': {
            'timeout': 30,
        },
    }
}

# Internationalization
LANGUAGE_CODE = 'ru-ru'
TIME_ZONE = 'Europe/Berlin'
USE_I18N = True
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# SUM-SR settings
SUMSR_OUT = Path(config('SUMSR_OUT', default=str(BASE_DIR / 'runs')))
SUMSR_DEVICE = config('SUMSR_DEVICE', default='cpu')
SUMSR_NUM_THREADS = config('SUMSR_NUM_THREADS', default=1, cast=int)
SUMSR_LOG_LEVEL = config('SUMSR_LOG_LEVEL', default='INFO')

# Логирование
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'summarization': {
            'handlers': ['console'],
            'level': SUMSR_LOG_LEVEL,
            'propagate': False,
        },
    },
}
