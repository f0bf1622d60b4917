"""Search-and-rescue simulation and water-quality analysis suite."""

__version__ = "0.1.0"
