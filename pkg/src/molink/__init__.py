"""Molecular-communication link: channel simulator, detectors and text transport."""

__version__ = "0.1.0"
