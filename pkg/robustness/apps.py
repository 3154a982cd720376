from django.apps import AppConfig


class RobustnessConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'robustness'
    verbose_name = 'Recommender robustness'
