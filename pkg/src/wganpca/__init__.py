"""Numerical checks that Wasserstein-GAN training with a linear generator recovers r-PCA."""

__version__ = "0.1.0"
