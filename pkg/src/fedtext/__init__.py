"""Desk-scale federated learning simulator for text mining tasks."""

__version__ = "0.1.0"
