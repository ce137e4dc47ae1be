"""Desk-scale long-video question answering pipeline."""

__version__ = "0.1.0"
