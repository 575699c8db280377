"""Bearing remaining-useful-life prediction with Weibull-informed loss functions."""

__version__ = "0.1.0"
