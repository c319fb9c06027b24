"""Design spaces of convolutional networks: specs, complexity, sampling and population statistics."""

__version__ = "0.1.0"
