"""
Settings package for haarboost_project.

Uses environment variable DJANGO_SETTINGS_MODULE to determine which settings to load.
Default is 'haarboost_project.settings.dev' for development.
"""
