"""Failure recovery for disaggregated RAN function chains on metro rings."""

__version__ = "0.1.0"
