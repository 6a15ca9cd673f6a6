"""Trace semantics for concurrent languages with symbolic execution of local code."""

__version__ = "0.1.0"
