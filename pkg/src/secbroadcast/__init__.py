"""Secrecy rates for parallel and fading wiretap broadcast channels."""

__version__ = "0.1.0"
