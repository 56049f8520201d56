"""Panel elasticity models and correlation analytics for epidemic and infodemic time series."""

__version__ = "0.1.0"
