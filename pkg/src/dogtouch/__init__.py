"""Tactile human/robot-dog interaction pipeline, desk scale."""

__version__ = "0.1.0"
