"""Cough audio synthesis with an auxiliary-classifier GAN."""

__version__ = "0.1.0"
