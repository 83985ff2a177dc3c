"""Desk-scale object-centric dexterous tool manipulation stack."""

__version__ = "0.1.0"
