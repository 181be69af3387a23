"""Offline stand-in for the tabulate distribution."""

__version__ = "0.0.stub"


def tabulate(rows, headers=()):
    lines = []
    if headers:
        lines.append(" | ".join(str(h) for h in headers))
    for row in rows:
        lines.append(" | ".join(str(c) for c in row))
    return "\n".join(lines)
