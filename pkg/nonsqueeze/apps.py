from django.apps import AppConfig


class NonsqueezeConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'nonsqueeze'
    verbose_name = 'Quantified non-squeezing'
