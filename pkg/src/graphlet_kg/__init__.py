"""Graphlet mining, relation graphs and conditional message passing for knowledge graphs."""

__version__ = "0.1.0"
