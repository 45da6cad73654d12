"""Synthetic urban built-up maps: toy and raster corpora, a numpy DCGAN, and
radial-profile morphology statistics for comparing real and generated cities."""

__version__ = "0.1.0"
