"""Small arithmetic helpers."""

VERSION = "1.0"
