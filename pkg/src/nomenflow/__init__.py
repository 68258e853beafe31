"""nomenflow: name-origin inference and return-migration analytics."""

__version__ = "0.1.0"
