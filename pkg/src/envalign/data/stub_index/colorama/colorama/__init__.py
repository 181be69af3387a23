"""Offline stand-in for the colorama distribution."""

__version__ = "0.0.stub"


class Fore:
    RED = GREEN = YELLOW = RESET = ""


class Style:
    BRIGHT = RESET_ALL = ""


def init(autoreset=False):
    return None
