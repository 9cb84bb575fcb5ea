"""Spatial-relation data curation and measurement toolkit."""

__version__ = "0.1.0"
