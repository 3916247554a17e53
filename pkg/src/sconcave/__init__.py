"""Geometry bounds, samplers, verifiers and learners for s-concave distributions."""

__version__ = "0.1.0"
