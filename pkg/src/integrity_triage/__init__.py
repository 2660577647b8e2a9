"""Triage of suspicious trading windows from market and attention data."""

__version__ = "0.1.0"
