"""Evaluation toolkit for duration-targeted hiring subsidies."""

__version__ = "0.1.0"
