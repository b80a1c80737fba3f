"""Streaming health monitoring and entropy estimation for random bit sources."""

__version__ = "0.1.0"
