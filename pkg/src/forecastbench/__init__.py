"""Small from-scratch neural forecasters for next-step prediction of a univariate series."""

__version__ = "0.1.0"
