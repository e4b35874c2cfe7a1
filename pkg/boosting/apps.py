from django.apps import AppConfig


class BoostingConfig(AppConfig):
    name = 'boosting'
    verbose_name = 'AdaBoost'
