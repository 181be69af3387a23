"""Tiny text statistics."""
