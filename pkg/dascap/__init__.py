"""Downlink capacity and port placement for distributed antenna systems DAS(N, L)."""

__version__ = "0.1.0"
