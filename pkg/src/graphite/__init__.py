"""Graphite: latent-variable generative modeling of graphs."""

__version__ = "0.1.0"
