"""Flow-guided nanoscale localization: simulator, solutions, benchmark suite."""

__version__ = "0.1.0"
