"""
Utilities Package for the LRE Estimator

This package contains utility modules and helper functions used throughout
the estimator.

Modules:
    logging: Centralized logging configuration and decorators
    config: YAML configuration loading with fallback locations
    errors: Exception hierarchy shared by all packages
"""
