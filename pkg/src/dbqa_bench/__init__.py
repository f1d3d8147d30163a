"""Benchmark harness for long-form database question answering."""

__version__ = "0.1.0"
