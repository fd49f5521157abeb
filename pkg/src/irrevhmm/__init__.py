"""Multiscale sampling of irreversible Langevin dynamics and its Reeb-graph limit."""

__version__ = "0.1.0"
