from django.apps import AppConfig


class BoostsvmConfig(AppConfig):
    name = 'boostsvm'
    verbose_name = 'AdaBoost with RBF-SVM components'
