"""Dependency parsing lab: graph, transition and neural parsers with error profiling."""

__version__ = "0.1.0"
