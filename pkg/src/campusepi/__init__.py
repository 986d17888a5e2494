"""Stochastic SEAIR outbreaks on class-enrollment networks, with tree-based analysis."""

__version__ = "0.1.0"
