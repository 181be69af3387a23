import requests

BASE_URL = "https://catalog.example.com"


def catalog_url(page=1):
    return f"{BASE_URL}/items?page={page}"


def fetch_catalog(page=1):
    return requests.get(catalog_url(page))
