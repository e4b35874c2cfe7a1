from django.apps import AppConfig


class SvmConfig(AppConfig):
    name = 'svm'
    verbose_name = 'Kernel SVM'
