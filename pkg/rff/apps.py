from django.apps import AppConfig


class RffConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'rff'
    verbose_name = 'Random Fourier features'
