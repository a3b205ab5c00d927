"""Counterfactual explanations for time-series cluster assignments."""

__version__ = "0.1.0"
