"""Driving-style recognition from trajectory segments, trained with
semantic privileged information that inference never sees."""

__version__ = "0.1.0"
