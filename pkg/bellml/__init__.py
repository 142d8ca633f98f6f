"""bellml package initializer."""

__all__ = []
