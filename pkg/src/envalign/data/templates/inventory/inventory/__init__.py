"""Toy stock keeping."""
