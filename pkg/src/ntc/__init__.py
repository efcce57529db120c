"""Nonnegative tensor completion."""
