"""
Test package for the LRE estimator.

This package contains unit tests for all estimator components including:
- Trial data ingestion and sufficient statistics
- Synthetic trial generation
- Mixed-model likelihood, fitting and empirical Bayes posteriors
- Estimation strategies, metrics, the study harness and the CLI
"""
