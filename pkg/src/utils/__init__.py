"""Utilities package for the genobin toolkit."""

from .output_handler import OutputHandler, OutputEventType

__all__ = ["OutputHandler", "OutputEventType"]
