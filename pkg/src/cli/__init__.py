"""Command-line interface for the genobin toolkit."""

from .commands import build_parser, main

__all__ = ["build_parser", "main"]
