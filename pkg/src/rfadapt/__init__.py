"""Behavioral simulator and bias controllers for an interference-adaptive GaN LNA front-end."""

__version__ = "0.1.0"
