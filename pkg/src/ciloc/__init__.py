"""Cochlear-implant electrode localization by particle belief propagation on an MRF."""

__version__ = "0.1.0"
