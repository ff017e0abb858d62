"""Occlusion-aware obstacle inference from the reactions of visible pedestrians."""

__version__ = "0.1.0"
