"""Compact modeling and circuit simulation of HZO ferroelectric tunneling junctions."""

__version__ = "0.1.0"
