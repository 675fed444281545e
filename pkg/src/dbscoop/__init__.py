"""Drone base station placement with cooperative relaying over shared unlicensed spectrum."""

__version__ = "0.1.0"
