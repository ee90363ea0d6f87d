"""Generative-UI gateway and pairwise-preference evaluation harness."""

__version__ = "0.1.0"
