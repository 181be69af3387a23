"""Offline stand-in for the requests distribution."""

__version__ = "0.0.stub"


class RequestException(Exception):
    pass


class ConnectionError(RequestException):
    pass


class Session:
    def get(self, url, **kwargs):
        raise ConnectionError(f"offline stub cannot fetch {url}")


def get(url, **kwargs):
    return Session().get(url, **kwargs)
