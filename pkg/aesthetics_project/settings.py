"""
Django settings for aesthetics_project project.

The project hosts no web surface: it provides settings, the evaluation-run
database and the management commands of the aesthetic_assessment app.
"""

from pathlib import Path
from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config("SECRET_KEY", default="aesthetics-local-development-key")

DEBUG = config("DEBUG", default=True, cast=bool)
ALLOWED_HOSTS = config("ALLOWED_HOSTS", default="", cast=Csv())


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",
    # Third party apps
    "rest_framework",
    # Local apps
    "aesthetic_assessment.apps.AestheticAssessmentConfig",
]


# Database

DATABASES = {
    "default": {
        "ENGINE": config("DB_ENGINE", default="django.db.backends.sqlite3"),
        "NAME": config("DB_NAME", default=str(BASE_DIR / "aesthetics.sqlite3")),
    }
}

REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": [
        "rest_framework.renderers.JSONRenderer",
    ],
}

# Toolkit configuration
AESTHETICS_DATA_ROOT = config("AESTHETICS_DATA_ROOT", default="")
AESTHETICS_OUTPUT_ROOT = config("AESTHETICS_OUTPUT_ROOT", default="")
BACKBONE_WEIGHTS_PATH = config("BACKBONE_WEIGHTS_PATH", default="")
TARGET_IMAGE_SIZE = config("TARGET_IMAGE_SIZE", default=224, cast=int)
AESTHETICS_DETERMINISTIC = config("AESTHETICS_DETERMINISTIC", default=True, cast=bool)

LOG_LEVEL = config("LOG_LEVEL", default="INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "colored": {
            "()": "coloredlogs.ColoredFormatter",
            "fmt": "%(asctime)s %(name)s %(levelname)s %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "colored",
        },
    },
    "loggers": {
        "aesthetic_assessment": {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
