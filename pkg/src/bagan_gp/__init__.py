"""Class-conditional GAN training for imbalanced image datasets."""

__version__ = "0.1.0"
