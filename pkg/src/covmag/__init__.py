"""Correlation sensing with pairs of NV centres: gates, noise, readout, protocols and estimators."""

__version__ = "0.1.0"
