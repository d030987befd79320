from django.apps import AppConfig


class AestheticAssessmentConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'aesthetic_assessment'
    verbose_name = 'Aesthetic assessment'
