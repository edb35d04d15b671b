"""Simulator and verification toolkit for asynchronous collective tree exploration."""

__version__ = "0.1.0"
TOOL = "ctexplore"
