"""Toolkit CCW: co-clustering wrapper para filtragem colaborativa."""

__version__ = "0.1.0"
