"""Adversarial spatio-temporal network for footstep-pressure freezing-of-gait detection."""

__version__ = "0.1.0"
