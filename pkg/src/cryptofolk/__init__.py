"""Computational folk-theorem strategies for repeated games with stateful players."""

__version__ = "0.1.0"
