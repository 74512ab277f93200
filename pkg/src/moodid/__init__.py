"""Mood-conditioned identification from smartphone telemetry."""

__version__ = "0.1.0"
