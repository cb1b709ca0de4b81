"""Embodied spatial/temporal QA synthesis and scoring toolkit."""

__version__ = "0.1.0"
