"""Chaos-based image cipher built on a sine-cosine pi hyperchaotic map."""
__version__ = "0.1.0"
