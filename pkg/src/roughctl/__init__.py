"""Controlled rough SDEs: rough paths, Davie-type schemes and rough value
functions computed by dynamic programming."""

__version__ = "0.1.0"
