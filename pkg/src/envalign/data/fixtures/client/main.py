"""Command-line entry point for the API client."""

import src
from app.client import APIClient


def main():
    client = APIClient("https://api.example.com")
    print(f"client ready: {client.base_url}")


if __name__ == "__main__":
    main()
