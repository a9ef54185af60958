"""Random generation, word maps and expansion experiments for finite classical groups."""

__version__ = "0.1.0"
